/**
 * Turn (pretrained classifier + image datasets) into an OMSB scenario bundle:
 * penultimate activations as features, the final Dense kernel/bias as the
 * head, predictions recomputed from that head so the bundle always satisfies
 * the argmax-consistency check of `oms-bench validate`.
 */

import * as tf from '@tensorflow/tfjs'

import { loadModel, predictFromHead, splitClassifier, type ClassifierParts } from './model.js'
import { entry, readContainerFile, writeContainerFile, type Container } from './omsb.js'
import { applyTransform, type TransformKind } from './transforms.js'

export class SpecError extends Error {}

export type OodSource =
  | { novelty: { dataset: string; split?: string } }
  | { transform: { kind: TransformKind; magnitude: number } }
  | 'none'

export interface ExtractionSpec {
  model: string
  id_dataset: string
  train_split: string
  test_split: string
  ood_source: OodSource
  caps: { train: number; test: number; ood: number }
  name: string
  out: string
}

export interface SplitStats {
  count: number
  errorRate: number
}

export interface ExtractionSummary {
  out: string
  oodKind: 'novelty' | 'covariate' | 'other'
  numClasses: number
  featureDim: number
  train: SplitStats
  testId: SplitStats
  ood: SplitStats
}

interface ImageSplit {
  images: tf.Tensor4D
  labels: Int32Array
}

export function parseSpec(raw: unknown): ExtractionSpec {
  if (typeof raw !== 'object' || raw === null) throw new SpecError('spec must be a JSON object')
  const spec = raw as Record<string, unknown>
  for (const field of ['model', 'id_dataset', 'name', 'out']) {
    if (typeof spec[field] !== 'string' || !spec[field]) {
      throw new SpecError(`spec.${field} must be a non-empty string`)
    }
  }
  const caps = spec.caps as Record<string, unknown> | undefined
  for (const side of ['train', 'test', 'ood']) {
    const v = caps?.[side]
    if (typeof v !== 'number' || !Number.isInteger(v) || v < 1) {
      throw new SpecError(`spec.caps.${side} must be an integer >= 1`)
    }
  }
  const source = spec.ood_source as OodSource | undefined
  const valid =
    source === 'none' ||
    (typeof source === 'object' && source !== null && ('novelty' in source || 'transform' in source))
  if (!valid) {
    throw new SpecError("spec.ood_source must be 'none', {novelty: ...} or {transform: ...}")
  }
  if (typeof source === 'object' && 'transform' in source) {
    const t = source.transform
    if (!['brightness', 'blur', 'pixelization'].includes(t?.kind)) {
      throw new SpecError(`unknown transform kind ${t?.kind}`)
    }
    if (typeof t.magnitude !== 'number' || !(t.magnitude > 0)) {
      throw new SpecError('transform magnitude must be a positive number')
    }
  }
  return {
    model: spec.model as string,
    id_dataset: spec.id_dataset as string,
    train_split: (spec.train_split as string) ?? 'train',
    test_split: (spec.test_split as string) ?? 'test',
    ood_source: source as OodSource,
    caps: spec.caps as ExtractionSpec['caps'],
    name: spec.name as string,
    out: spec.out as string,
  }
}

function loadImageSplit(container: Container, split: string, cap: number, path: string): ImageSplit {
  const imagesEntry = container.entries.get(`${split}.images`)
  const labelsEntry = container.entries.get(`${split}.labels`)
  if (!imagesEntry || !labelsEntry) {
    throw new SpecError(`dataset ${path} has no '${split}.images'/'${split}.labels' entries`)
  }
  if (imagesEntry.shape.length !== 4 || imagesEntry.dtype !== 'f32') {
    throw new SpecError(`${split}.images must be a f32 (N, H, W, C) tensor`)
  }
  const [n, h, w, c] = imagesEntry.shape
  const take = Math.min(cap, n)
  const pixels = h * w * c
  const images = tf.tensor4d(
    (imagesEntry.data as Float32Array).subarray(0, take * pixels),
    [take, h, w, c],
  )
  const labels = new Int32Array((labelsEntry.data as Int32Array).subarray(0, take))
  return { images, labels }
}

function extractFeatures(parts: ClassifierParts, images: tf.Tensor4D): Float32Array {
  const features = tf.tidy(() => parts.featureModel.predict(images) as tf.Tensor)
  if (features.shape.length !== 2) {
    features.dispose()
    throw new SpecError(`penultimate representation has rank ${features.shape.length}, expected 2`)
  }
  const data = features.dataSync() as Float32Array
  features.dispose()
  for (const v of data) {
    if (!Number.isFinite(v)) throw new SpecError('model produced non-finite features')
  }
  return new Float32Array(data)
}

function splitEntries(
  prefix: string,
  parts: ClassifierParts,
  images: tf.Tensor4D,
  labels: Int32Array,
): { entries: [string, ReturnType<typeof entry>][]; stats: SplitStats } {
  const features = extractFeatures(parts, images)
  const predictions = predictFromHead(
    features,
    parts.featureDim,
    parts.weights,
    parts.bias,
    parts.numClasses,
  )
  let errors = 0
  for (let i = 0; i < labels.length; i++) {
    if (predictions[i] !== labels[i]) errors += 1
  }
  const n = labels.length
  return {
    entries: [
      [`${prefix}.features`, entry(features, [n, parts.featureDim])],
      [`${prefix}.labels`, entry(labels, [n])],
      [`${prefix}.predictions`, entry(predictions, [n])],
    ],
    stats: { count: n, errorRate: n ? errors / n : 0 },
  }
}

export async function extract(spec: ExtractionSpec): Promise<ExtractionSummary> {
  const model = await loadModel(spec.model)
  const parts = splitClassifier(model)
  const dataset = readContainerFile(spec.id_dataset)

  const train = loadImageSplit(dataset, spec.train_split, spec.caps.train, spec.id_dataset)
  const test = loadImageSplit(dataset, spec.test_split, spec.caps.test, spec.id_dataset)
  for (const [name, split] of [
    ['train', train],
    ['test', test],
  ] as const) {
    for (const label of split.labels) {
      if (label < 0 || label >= parts.numClasses) {
        throw new SpecError(`${name} label ${label} outside [0, ${parts.numClasses})`)
      }
    }
  }

  let oodKind: ExtractionSummary['oodKind']
  let ood: ImageSplit
  if (spec.ood_source === 'none') {
    // no OOD material: mirror the capped test images so the bundle stays
    // well-formed and OMS evaluation still works
    oodKind = 'other'
    ood = {
      images: test.images.clone(),
      labels: new Int32Array(test.labels),
    }
  } else if ('novelty' in spec.ood_source) {
    oodKind = 'novelty'
    const noveltyPath = spec.ood_source.novelty.dataset
    const noveltySplit = spec.ood_source.novelty.split ?? 'test'
    const noveltyData = readContainerFile(noveltyPath)
    const raw = loadImageSplit(noveltyData, noveltySplit, spec.caps.ood, noveltyPath)
    ood = { images: raw.images, labels: new Int32Array(raw.labels.length).fill(-1) }
  } else {
    oodKind = 'covariate'
    const { kind, magnitude } = spec.ood_source.transform
    const base = loadImageSplit(dataset, spec.test_split, spec.caps.ood, spec.id_dataset)
    ood = { images: applyTransform(base.images, kind, magnitude), labels: base.labels }
    base.images.dispose()
  }

  const trainOut = splitEntries('train', parts, train.images, train.labels)
  const testOut = splitEntries('test_id', parts, test.images, test.labels)
  const oodOut = splitEntries('ood', parts, ood.images, ood.labels)
  for (const split of [train, test, ood]) split.images.dispose()

  const entries = new Map([
    ...trainOut.entries,
    ...testOut.entries,
    ...oodOut.entries,
    ['head.weights', entry(parts.weights, [parts.numClasses, parts.featureDim])] as const,
    ['head.bias', entry(parts.bias, [parts.numClasses])] as const,
  ])
  writeContainerFile(
    {
      entries,
      meta: { name: spec.name, ood_kind: oodKind, num_classes: parts.numClasses },
    },
    spec.out,
  )
  return {
    out: spec.out,
    oodKind,
    numClasses: parts.numClasses,
    featureDim: parts.featureDim,
    train: trainOut.stats,
    testId: testOut.stats,
    ood: oodOut.stats,
  }
}
