/**
 * Self-contained fixtures: a procedural 3-class image dataset, a disjoint
 * novelty dataset, and a small convnet trained on the former. Used by the
 * test suite and handy for smoke-testing the extractor without downloading
 * anything.
 */

import { mkdirSync } from 'node:fs'
import { join } from 'node:path'

import * as tf from '@tensorflow/tfjs'

import { entry, writeContainerFile } from './omsb.js'
import { saveModel } from './model.js'

export const IMAGE_SIZE = 16
export const NUM_CLASSES = 3

function lcg(seed: number): () => number {
  let state = seed >>> 0
  return () => {
    state = (Math.imul(1664525, state) + 1013904223) >>> 0
    return state / 2 ** 32
  }
}

/**
 * Class k has a dominant colour channel k plus stripes and noise; easy for a
 * small convnet, destroyed by hard brightness clipping.
 */
export function makeIdImages(perClass: number, seed: number): { images: Float32Array; labels: Int32Array } {
  const rand = lcg(seed)
  const n = perClass * NUM_CLASSES
  const pixels = IMAGE_SIZE * IMAGE_SIZE * 3
  const images = new Float32Array(n * pixels)
  const labels = new Int32Array(n)
  for (let i = 0; i < n; i++) {
    const cls = i % NUM_CLASSES
    labels[i] = cls
    const phase = Math.floor(rand() * IMAGE_SIZE)
    for (let y = 0; y < IMAGE_SIZE; y++) {
      for (let x = 0; x < IMAGE_SIZE; x++) {
        const stripe = (x + phase) % 4 < 2 ? 0.12 : -0.12
        for (let c = 0; c < 3; c++) {
          const base = c === cls ? 0.62 : 0.22
          const v = base + stripe + (rand() - 0.5) * 0.18
          images[((i * IMAGE_SIZE + y) * IMAGE_SIZE + x) * 3 + c] = Math.min(1, Math.max(0, v))
        }
      }
    }
  }
  return { images, labels }
}

/** Novel content: grey checkerboards, nothing like the colour-coded classes. */
export function makeNoveltyImages(count: number, seed: number): { images: Float32Array; labels: Int32Array } {
  const rand = lcg(seed)
  const pixels = IMAGE_SIZE * IMAGE_SIZE * 3
  const images = new Float32Array(count * pixels)
  const labels = new Int32Array(count)
  for (let i = 0; i < count; i++) {
    const cell = 2 + Math.floor(rand() * 3)
    for (let y = 0; y < IMAGE_SIZE; y++) {
      for (let x = 0; x < IMAGE_SIZE; x++) {
        const on = (Math.floor(x / cell) + Math.floor(y / cell)) % 2 === 0
        const v = (on ? 0.85 : 0.15) + (rand() - 0.5) * 0.1
        for (let c = 0; c < 3; c++) {
          images[((i * IMAGE_SIZE + y) * IMAGE_SIZE + x) * 3 + c] = Math.min(1, Math.max(0, v))
        }
      }
    }
  }
  return { images, labels }
}

export function buildClassifier(): tf.LayersModel {
  const model = tf.sequential()
  model.add(
    tf.layers.conv2d({
      filters: 8,
      kernelSize: 3,
      activation: 'relu',
      inputShape: [IMAGE_SIZE, IMAGE_SIZE, 3],
    }),
  )
  model.add(tf.layers.maxPooling2d({ poolSize: 2 }))
  model.add(tf.layers.flatten())
  model.add(tf.layers.dense({ units: 16, activation: 'relu' }))
  model.add(tf.layers.dense({ units: NUM_CLASSES, activation: 'softmax' }))
  model.compile({ optimizer: tf.train.adam(0.01), loss: 'categoricalCrossentropy', metrics: ['accuracy'] })
  return model
}

export interface FixturePaths {
  modelDir: string
  idDataset: string
  noveltyDataset: string
  trainAccuracy: number
}

export async function buildFixtures(dir: string): Promise<FixturePaths> {
  mkdirSync(dir, { recursive: true })
  const train = makeIdImages(120, 1)
  const test = makeIdImages(60, 2)
  const novelty = makeNoveltyImages(120, 3)

  const idDataset = join(dir, 'patterns_id.omsb')
  writeContainerFile(
    {
      entries: new Map([
        ['train.images', entry(train.images, [train.labels.length, IMAGE_SIZE, IMAGE_SIZE, 3])],
        ['train.labels', entry(train.labels, [train.labels.length])],
        ['test.images', entry(test.images, [test.labels.length, IMAGE_SIZE, IMAGE_SIZE, 3])],
        ['test.labels', entry(test.labels, [test.labels.length])],
      ]),
      meta: { name: 'patterns', classes: NUM_CLASSES },
    },
    idDataset,
  )
  const noveltyDataset = join(dir, 'checkers_novel.omsb')
  writeContainerFile(
    {
      entries: new Map([
        ['test.images', entry(novelty.images, [novelty.labels.length, IMAGE_SIZE, IMAGE_SIZE, 3])],
        ['test.labels', entry(novelty.labels, [novelty.labels.length])],
      ]),
      meta: { name: 'checkers' },
    },
    noveltyDataset,
  )

  const model = buildClassifier()
  const x = tf.tensor4d(train.images, [train.labels.length, IMAGE_SIZE, IMAGE_SIZE, 3])
  const y = tf.oneHot(tf.tensor1d(train.labels, 'int32'), NUM_CLASSES)
  const history = await model.fit(x, y, { epochs: 12, batchSize: 32, shuffle: true, verbose: 0 })
  x.dispose()
  y.dispose()
  const accuracies = history.history['acc'] ?? history.history['accuracy'] ?? []
  const trainAccuracy = Number(accuracies[accuracies.length - 1] ?? 0)

  const modelDir = join(dir, 'model')
  await saveModel(model, modelDir)
  return { modelDir, idDataset, noveltyDataset, trainAccuracy }
}

const invokedDirectly = process.argv[1]?.endsWith('fixtures.js')
if (invokedDirectly) {
  const target = process.argv[2] ?? 'fixtures'
  buildFixtures(target).then((paths) => {
    console.log(JSON.stringify(paths, null, 2))
  })
}
