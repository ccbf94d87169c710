/**
 * Frame sources the extractor can decode without external binaries:
 *
 *  - a directory of numbered .png / .jpg frame images (sorted by name), with
 *    the source frame rate supplied by the caller;
 *  - a .rawv file: magic "RAWV", uint16 width, uint16 height, float64 fps,
 *    uint32 frame count, then packed rgb24 frames (all little-endian).
 *
 * Anything else raises DecodeError.
 */

import { readdirSync, readFileSync, statSync } from 'node:fs'
import { join, extname } from 'node:path'

import jpeg from 'jpeg-js'
import { PNG } from 'pngjs'

export class DecodeError extends Error {}

export interface DecodedVideo {
  fps: number
  frameCount: number
  width: number
  height: number
  /** rgb values in [0, 1], row-major (height, width, 3) */
  frame(index: number): Float32Array
}

const RAWV_MAGIC = 'RAWV'
const RAWV_HEADER_BYTES = 4 + 2 + 2 + 8 + 4

function rgbaToUnitRgb(data: Uint8Array, width: number, height: number): Float32Array {
  const out = new Float32Array(width * height * 3)
  for (let p = 0; p < width * height; p++) {
    out[3 * p] = data[4 * p] / 255
    out[3 * p + 1] = data[4 * p + 1] / 255
    out[3 * p + 2] = data[4 * p + 2] / 255
  }
  return out
}

function openImageDirectory(dir: string, sourceFps: number): DecodedVideo {
  const names = readdirSync(dir)
    .filter(name => ['.png', '.jpg', '.jpeg'].includes(extname(name).toLowerCase()))
    .sort()
  if (names.length === 0) {
    throw new DecodeError(`directory ${dir} holds no .png/.jpg frames`)
  }
  const decoded = names.map(name => {
    const raw = readFileSync(join(dir, name))
    try {
      if (extname(name).toLowerCase() === '.png') {
        const png = PNG.sync.read(raw)
        return { width: png.width, height: png.height, data: png.data }
      }
      const img = jpeg.decode(raw, { useTArray: true })
      return { width: img.width, height: img.height, data: img.data }
    } catch (err) {
      throw new DecodeError(`cannot decode ${name}: ${err}`)
    }
  })
  const { width, height } = decoded[0]
  if (decoded.some(d => d.width !== width || d.height !== height)) {
    throw new DecodeError(`frames in ${dir} have mixed resolutions`)
  }
  return {
    fps: sourceFps,
    frameCount: decoded.length,
    width,
    height,
    frame: index => rgbaToUnitRgb(decoded[index].data, width, height),
  }
}

function openRawVideo(path: string): DecodedVideo {
  const data = readFileSync(path)
  if (data.length < RAWV_HEADER_BYTES || data.toString('ascii', 0, 4) !== RAWV_MAGIC) {
    throw new DecodeError(`${path} is not a RAWV container`)
  }
  const width = data.readUInt16LE(4)
  const height = data.readUInt16LE(6)
  const fps = data.readDoubleLE(8)
  const frameCount = data.readUInt32LE(16)
  const frameBytes = width * height * 3
  if (width < 1 || height < 1 || !Number.isFinite(fps) || fps <= 0) {
    throw new DecodeError(`${path} declares impossible dimensions or rate`)
  }
  if (data.length !== RAWV_HEADER_BYTES + frameCount * frameBytes) {
    throw new DecodeError(`${path} is truncated or carries trailing bytes`)
  }
  return {
    fps,
    frameCount,
    width,
    height,
    frame: index => {
      const start = RAWV_HEADER_BYTES + index * frameBytes
      const out = new Float32Array(frameBytes)
      for (let i = 0; i < frameBytes; i++) out[i] = data[start + i] / 255
      return out
    },
  }
}

export function encodeRawVideo(
  width: number,
  height: number,
  fps: number,
  frames: Uint8Array[],
): Buffer {
  const frameBytes = width * height * 3
  const out = Buffer.alloc(RAWV_HEADER_BYTES + frames.length * frameBytes)
  out.write(RAWV_MAGIC, 0, 'ascii')
  out.writeUInt16LE(width, 4)
  out.writeUInt16LE(height, 6)
  out.writeDoubleLE(fps, 8)
  out.writeUInt32LE(frames.length, 16)
  frames.forEach((frame, i) => {
    if (frame.length !== frameBytes) throw new DecodeError(`frame ${i} has wrong size`)
    out.set(frame, RAWV_HEADER_BYTES + i * frameBytes)
  })
  return out
}

export function openFrames(input: string, sourceFps: number): DecodedVideo {
  let stats
  try {
    stats = statSync(input)
  } catch {
    throw new DecodeError(`input ${input} does not exist`)
  }
  if (stats.isDirectory()) return openImageDirectory(input, sourceFps)
  if (extname(input).toLowerCase() === '.rawv') return openRawVideo(input)
  throw new DecodeError(`cannot decode ${input}: not a frame directory or .rawv file`)
}

/**
 * Indices of the source frames sampled at a fixed output rate: frame i of the
 * output sits at t = i / sampleFps and maps to the nearest source frame.
 */
export function sampleIndices(frameCount: number, sourceFps: number, sampleFps: number): number[] {
  if (sampleFps <= 0) throw new DecodeError(`sample fps must be positive, got ${sampleFps}`)
  const duration = frameCount / sourceFps
  const out: number[] = []
  for (let i = 0; i / sampleFps < duration; i++) {
    const src = Math.min(frameCount - 1, Math.round((i / sampleFps) * sourceFps))
    out.push(src)
  }
  return out
}
