/**
 * Spatial max pooling of a conv feature map into one per-channel vector.
 * Layout is row-major (height, width, channels), matching both tfjs NHWC
 * tensors (one image) and the shared conformance fixture.
 */

export function channelMax(
  data: ArrayLike<number>,
  height: number,
  width: number,
  channels: number,
): Float32Array {
  if (height < 1 || width < 1 || channels < 1) {
    throw new RangeError(`empty feature map: ${height}x${width}x${channels}`)
  }
  if (data.length !== height * width * channels) {
    throw new RangeError(`expected ${height * width * channels} values, got ${data.length}`)
  }
  const out = new Float32Array(channels).fill(-Infinity)
  let i = 0
  for (let p = 0; p < height * width; p++) {
    for (let c = 0; c < channels; c++) {
      const v = data[i++]
      if (v > out[c]) out[c] = v
    }
  }
  return out
}
