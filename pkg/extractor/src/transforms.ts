/**
 * Covariate-shift transforms applied to ID test images, all operating on
 * (N, H, W, C) tensors with values in [0, 1].
 */

import * as tf from '@tensorflow/tfjs'

export type TransformKind = 'brightness' | 'blur' | 'pixelization'

export function applyTransform(images: tf.Tensor4D, kind: TransformKind, magnitude: number): tf.Tensor4D {
  switch (kind) {
    case 'brightness':
      return brightness(images, magnitude)
    case 'blur':
      return blur(images, magnitude)
    case 'pixelization':
      return pixelization(images, magnitude)
  }
}

/** Multiply intensities by `factor` and clamp back into [0, 1]. */
export function brightness(images: tf.Tensor4D, factor: number): tf.Tensor4D {
  if (factor <= 0) throw new RangeError('brightness factor must be positive')
  return tf.tidy(() => tf.clipByValue(images.mul(factor), 0, 1))
}

/** Box blur with kernel size 2*radius + 1 per channel. */
export function blur(images: tf.Tensor4D, radius: number): tf.Tensor4D {
  const r = Math.round(radius)
  if (r < 1) throw new RangeError('blur radius must be at least 1')
  const size = 2 * r + 1
  const channels = images.shape[3]
  return tf.tidy(() => {
    const kernel = tf.ones([size, size, channels, 1]).div(size * size) as tf.Tensor4D
    return tf.depthwiseConv2d(images, kernel, 1, 'same')
  })
}

/** Downscale by `ratio` with nearest neighbour, then scale back up. */
export function pixelization(images: tf.Tensor4D, ratio: number): tf.Tensor4D {
  if (!(ratio > 0 && ratio < 1)) throw new RangeError('pixelization ratio must lie in (0, 1)')
  const [, h, w] = images.shape
  const smallH = Math.max(1, Math.round(h * ratio))
  const smallW = Math.max(1, Math.round(w * ratio))
  return tf.tidy(() => {
    const small = tf.image.resizeNearestNeighbor(images, [smallH, smallW])
    return tf.image.resizeNearestNeighbor(small, [h, w])
  })
}
