/**
 * Save/load tfjs LayersModels on plain files (no tfjs-node dependency) and
 * pull apart a classifier into (penultimate feature extractor, final linear
 * head).
 */

import { mkdirSync, readFileSync, writeFileSync } from 'node:fs'
import { join } from 'node:path'

import * as tf from '@tensorflow/tfjs'

export class UnsupportedArchitectureError extends Error {}

export async function saveModel(model: tf.LayersModel, dir: string): Promise<void> {
  mkdirSync(dir, { recursive: true })
  await model.save(
    tf.io.withSaveHandler(async (artifacts) => {
      const { weightData, ...rest } = artifacts
      const weights = Buffer.from(weightData as ArrayBuffer)
      writeFileSync(join(dir, 'model.json'), JSON.stringify(rest))
      writeFileSync(join(dir, 'weights.bin'), weights)
      return { modelArtifactsInfo: { dateSaved: new Date(), modelTopologyType: 'JSON' } }
    }),
  )
}

export async function loadModel(dir: string): Promise<tf.LayersModel> {
  const artifacts = JSON.parse(readFileSync(join(dir, 'model.json'), 'utf-8'))
  const weights = readFileSync(join(dir, 'weights.bin'))
  const weightData = weights.buffer.slice(weights.byteOffset, weights.byteOffset + weights.byteLength)
  return tf.loadLayersModel(tf.io.fromMemory({ ...artifacts, weightData }))
}

export interface ClassifierParts {
  /** maps input images to the penultimate representation (N, d) */
  featureModel: tf.LayersModel
  /** final linear layer, row-major (K, d): logits = weights x + bias */
  weights: Float32Array
  bias: Float32Array
  numClasses: number
  featureDim: number
}

/**
 * The model must end in a single Dense layer (linear or softmax activation);
 * its kernel/bias become the exported head and everything before it becomes
 * the feature extractor.
 */
export function splitClassifier(model: tf.LayersModel): ClassifierParts {
  const last = model.layers[model.layers.length - 1]
  const config = last.getConfig() as { activation?: string }
  if (last.getClassName() !== 'Dense') {
    throw new UnsupportedArchitectureError(
      `final layer is ${last.getClassName()}, expected a single Dense layer`,
    )
  }
  if (config.activation && config.activation !== 'linear' && config.activation !== 'softmax') {
    throw new UnsupportedArchitectureError(
      `final Dense activation ${config.activation} is not a plain linear head`,
    )
  }
  const [kernel, biasVar] = last.getWeights()
  if (!kernel || kernel.shape.length !== 2) {
    throw new UnsupportedArchitectureError('final Dense layer has no 2-D kernel')
  }
  const [featureDim, numClasses] = kernel.shape as [number, number]
  // tfjs stores the kernel as (d, K); the bundle head wants (K, d)
  const transposed = tf.tidy(() => kernel.transpose())
  const weights = transposed.dataSync() as Float32Array
  transposed.dispose()
  const bias = biasVar
    ? (biasVar.dataSync() as Float32Array)
    : new Float32Array(numClasses)

  const penultimate = last.input
  if (Array.isArray(penultimate)) {
    throw new UnsupportedArchitectureError('final Dense layer has multiple inputs')
  }
  const featureModel = tf.model({ inputs: model.inputs, outputs: penultimate })
  return { featureModel, weights: new Float32Array(weights), bias: new Float32Array(bias), numClasses, featureDim }
}

/** Lowest-index argmax of W x + b, accumulated in f64 over the f32 inputs. */
export function predictFromHead(
  features: Float32Array,
  featureDim: number,
  weights: Float32Array,
  bias: Float32Array,
  numClasses: number,
): Int32Array {
  const n = features.length / featureDim
  const out = new Int32Array(n)
  for (let i = 0; i < n; i++) {
    let best = -Infinity
    let bestIdx = 0
    for (let k = 0; k < numClasses; k++) {
      let acc = bias[k]
      const row = k * featureDim
      const base = i * featureDim
      for (let j = 0; j < featureDim; j++) {
        acc += weights[row + j] * features[base + j]
      }
      if (acc > best) {
        best = acc
        bestIdx = k
      }
    }
    out[i] = bestIdx
  }
  return out
}
