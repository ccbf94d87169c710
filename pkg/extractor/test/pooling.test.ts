import { readFileSync } from 'node:fs'
import { join } from 'node:path'

import { describe, expect, it } from 'vitest'

import { channelMax } from '../src/pooling.js'

const FIXTURES = join(__dirname, '..', '..', 'fixtures')

describe('channelMax', () => {
  it('matches the shared conformance fixture within its tolerance', () => {
    const payload = JSON.parse(readFileSync(join(FIXTURES, 'mac_conformance.json'), 'utf-8'))
    for (const c of payload.cases) {
      const [h, w, ch] = c.shape
      const pooled = channelMax(c.tensor, h, w, ch)
      expect(pooled).toHaveLength(c.pooled.length)
      pooled.forEach((v, i) => {
        expect(Math.abs(v - c.pooled[i])).toBeLessThanOrEqual(payload.tolerance)
      })
    }
  })

  it('equals a brute-force scan on random data', () => {
    const h = 5, w = 7, ch = 4
    const data = Float32Array.from({ length: h * w * ch }, (_, i) => Math.sin(i * 1.7) * 3)
    const expected = new Float32Array(ch).fill(-Infinity)
    for (let y = 0; y < h; y++)
      for (let x = 0; x < w; x++)
        for (let c = 0; c < ch; c++) {
          const v = data[(y * w + x) * ch + c]
          if (v > expected[c]) expected[c] = v
        }
    expect(Array.from(channelMax(data, h, w, ch))).toEqual(Array.from(expected))
  })

  it('rejects size mismatches and empty maps', () => {
    expect(() => channelMax(new Float32Array(5), 2, 2, 2)).toThrow(RangeError)
    expect(() => channelMax(new Float32Array(0), 0, 1, 1)).toThrow(RangeError)
  })
})
