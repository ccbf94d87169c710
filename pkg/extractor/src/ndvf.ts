/**
 * NDVF container encoding/decoding, binary-compatible with the ndvr engine.
 *
 * Layout (little-endian): magic "NDVF", version byte 1, uint32 header length,
 * compact JSON header {video_id, fps, frame_count, fc_dim, layer_dims}, then
 * per frame: uint32 frame_index, float64 timestamp, fc_dim float32 values and
 * each conv layer's float32 values.
 */

const MAGIC = 'NDVF'
const VERSION = 1
const TIMESTAMP_TOL = 1e-9

export class NdvfFormatError extends Error {}
export class NdvfCorruptionError extends NdvfFormatError {}
export class NdvfValidationError extends Error {}

export interface FrameFeature {
  frameIndex: number
  timestamp: number
  fcVector: Float32Array
  convVectors: Float32Array[]
}

export interface VideoFeatures {
  videoId: string
  fps: number
  frames: FrameFeature[]
  fcDim: number
  layerDims: number[]
}

function allFinite(values: Float32Array): boolean {
  for (const v of values) {
    if (!Number.isFinite(v)) return false
  }
  return true
}

export function validateVideo(video: VideoFeatures): void {
  if (!video.videoId) throw new NdvfValidationError('video_id must be non-empty')
  if (!Number.isFinite(video.fps) || video.fps <= 0) {
    throw new NdvfValidationError(`fps must be positive, got ${video.fps}`)
  }
  let prev = -1
  for (const frame of video.frames) {
    if (frame.frameIndex <= prev) {
      throw new NdvfValidationError(`frame_index not strictly increasing at ${frame.frameIndex}`)
    }
    prev = frame.frameIndex
    const expected = frame.frameIndex / video.fps
    if (Math.abs(frame.timestamp - expected) > TIMESTAMP_TOL * Math.max(1, Math.abs(expected))) {
      throw new NdvfValidationError(
        `frame ${frame.frameIndex}: timestamp ${frame.timestamp} != frame_index/fps ${expected}`,
      )
    }
    if (frame.fcVector.length !== video.fcDim) {
      throw new NdvfValidationError(
        `frame ${frame.frameIndex}: fc dim ${frame.fcVector.length} != header ${video.fcDim}`,
      )
    }
    const dims = frame.convVectors.map(v => v.length)
    if (dims.length !== video.layerDims.length || dims.some((d, i) => d !== video.layerDims[i])) {
      throw new NdvfValidationError(
        `frame ${frame.frameIndex}: conv dims [${dims}] != header [${video.layerDims}]`,
      )
    }
    if (!allFinite(frame.fcVector) || frame.convVectors.some(v => !allFinite(v))) {
      throw new NdvfValidationError(`frame ${frame.frameIndex} contains non-finite values`)
    }
  }
}

export function encodeNdvf(video: VideoFeatures): Buffer {
  validateVideo(video)
  const header = Buffer.from(
    JSON.stringify({
      video_id: video.videoId,
      fps: video.fps,
      frame_count: video.frames.length,
      fc_dim: video.fcDim,
      layer_dims: video.layerDims,
    }),
    'utf-8',
  )
  const floatsPerFrame = video.fcDim + video.layerDims.reduce((a, b) => a + b, 0)
  const frameBytes = 4 + 8 + 4 * floatsPerFrame
  const out = Buffer.alloc(4 + 1 + 4 + header.length + video.frames.length * frameBytes)
  let offset = out.write(MAGIC, 0, 'ascii')
  offset = out.writeUInt8(VERSION, offset)
  offset = out.writeUInt32LE(header.length, offset)
  offset += header.copy(out, offset)
  for (const frame of video.frames) {
    offset = out.writeUInt32LE(frame.frameIndex, offset)
    offset = out.writeDoubleLE(frame.timestamp, offset)
    for (const value of frame.fcVector) offset = out.writeFloatLE(value, offset)
    for (const vec of frame.convVectors) {
      for (const value of vec) offset = out.writeFloatLE(value, offset)
    }
  }
  return out
}

export function decodeNdvf(data: Buffer): VideoFeatures {
  if (data.length < 9) throw new NdvfCorruptionError('container shorter than its fixed prefix')
  if (data.toString('ascii', 0, 4) !== MAGIC) {
    throw new NdvfFormatError(`bad magic ${JSON.stringify(data.toString('ascii', 0, 4))}`)
  }
  if (data.readUInt8(4) !== VERSION) {
    throw new NdvfFormatError(`unsupported NDVF version ${data.readUInt8(4)}`)
  }
  const headerLen = data.readUInt32LE(5)
  if (data.length < 9 + headerLen) throw new NdvfCorruptionError('truncated header')
  let header: any
  try {
    header = JSON.parse(data.toString('utf-8', 9, 9 + headerLen))
  } catch (err) {
    throw new NdvfCorruptionError(`header is not valid JSON: ${err}`)
  }
  const videoId = header.video_id
  const fps = Number(header.fps)
  const frameCount = Number(header.frame_count)
  const fcDim = Number(header.fc_dim)
  const layerDims: number[] = (header.layer_dims ?? []).map((d: unknown) => Number(d))
  if (
    typeof videoId !== 'string' ||
    !Number.isFinite(fps) ||
    !Number.isInteger(frameCount) ||
    frameCount < 0 ||
    !Number.isInteger(fcDim) ||
    fcDim < 1 ||
    layerDims.some(d => !Number.isInteger(d) || d < 1)
  ) {
    throw new NdvfCorruptionError(`header missing or malformed fields: ${JSON.stringify(header)}`)
  }

  const floatsPerFrame = fcDim + layerDims.reduce((a, b) => a + b, 0)
  const frames: FrameFeature[] = []
  let offset = 9 + headerLen
  for (let i = 0; i < frameCount; i++) {
    if (data.length < offset + 12 + 4 * floatsPerFrame) {
      throw new NdvfCorruptionError(`container truncated in frame ${i}`)
    }
    const frameIndex = data.readUInt32LE(offset)
    const timestamp = data.readDoubleLE(offset + 4)
    offset += 12
    const fcVector = new Float32Array(fcDim)
    for (let j = 0; j < fcDim; j++) fcVector[j] = data.readFloatLE(offset + 4 * j)
    offset += 4 * fcDim
    const convVectors = layerDims.map(dim => {
      const vec = new Float32Array(dim)
      for (let j = 0; j < dim; j++) vec[j] = data.readFloatLE(offset + 4 * j)
      offset += 4 * dim
      return vec
    })
    frames.push({ frameIndex, timestamp, fcVector, convVectors })
  }
  if (offset !== data.length) {
    throw new NdvfCorruptionError('trailing bytes after the last declared frame')
  }
  const video = { videoId, fps, frames, fcDim, layerDims }
  validateVideo(video)
  return video
}
