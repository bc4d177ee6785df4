/** Density-shape scores used to auto-detect interesting time steps. */

export interface Peak {
  index: number
  value: number
}

/** Local maxima of a sampled curve, highest first. */
export function findPeaks(values: number[]): Peak[] {
  const peaks: Peak[] = []
  for (let i = 1; i < values.length - 1; i++) {
    if (values[i] > values[i - 1] && values[i] >= values[i + 1]) {
      peaks.push({ index: i, value: values[i] })
    }
  }
  peaks.sort((a, b) => b.value - a.value)
  return peaks
}

/**
 * Bimodality score in [0, 1]: the relative height of the second mode,
 * discounted by how shallow the valley between the two modes is.
 * Unimodal curves score 0.
 */
export function bimodalityScore(values: number[]): number {
  const top = Math.max(...values)
  if (!(top > 0)) return 0
  const normalized = values.map(v => v / top)
  const peaks = findPeaks(normalized).filter(p => p.value >= 0.05)
  if (peaks.length < 2) return 0
  const [first, second] = peaks
  const lo = Math.min(first.index, second.index)
  const hi = Math.max(first.index, second.index)
  const valley = Math.min(...normalized.slice(lo, hi + 1))
  const separation = 1 - valley / second.value
  return separation <= 0 ? 0 : second.value * separation
}

/** Absolute skewness of the density treated as a probability over its grid. */
export function absSkewness(grid: number[], values: number[]): number {
  let mass = 0
  for (const v of values) mass += v
  if (!(mass > 0)) return 0
  let mean = 0
  for (let i = 0; i < grid.length; i++) mean += (values[i] / mass) * grid[i]
  let variance = 0
  let third = 0
  for (let i = 0; i < grid.length; i++) {
    const p = values[i] / mass
    const d = grid[i] - mean
    variance += p * d * d
    third += p * d * d * d
  }
  if (variance <= 0) return 0
  return Math.abs(third / Math.pow(variance, 1.5))
}
