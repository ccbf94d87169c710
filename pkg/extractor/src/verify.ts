/** Validation report for an NDVF file: format, dimensions, finiteness. */

import { readFileSync } from 'node:fs'

import { decodeNdvf } from './ndvf.js'

export interface VerifyReport {
  ok: boolean
  path: string
  videoId?: string
  fps?: number
  frameCount?: number
  fcDim?: number
  layerDims?: number[]
  error?: string
}

export function verifyFile(path: string): VerifyReport {
  let data: Buffer
  try {
    data = readFileSync(path)
  } catch (err) {
    return { ok: false, path, error: `cannot read file: ${err}` }
  }
  try {
    const video = decodeNdvf(data)
    return {
      ok: true,
      path,
      videoId: video.videoId,
      fps: video.fps,
      frameCount: video.frames.length,
      fcDim: video.fcDim,
      layerDims: video.layerDims,
    }
  } catch (err) {
    return { ok: false, path, error: String(err) }
  }
}
