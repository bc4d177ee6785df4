/** Headless SVG plotting helpers: scales, ticks, axes, marks. */

export interface Margin {
  top: number
  right: number
  bottom: number
  left: number
}

export interface Scale {
  (value: number): number
  domain: [number, number]
  range: [number, number]
}

export function linearScale(domain: [number, number], range: [number, number]): Scale {
  const [d0, d1] = domain
  const [r0, r1] = range
  const span = d1 - d0 === 0 ? 1 : d1 - d0
  const scale = ((value: number) => r0 + ((value - d0) / span) * (r1 - r0)) as Scale
  scale.domain = domain
  scale.range = range
  return scale
}

export function extent(values: number[]): [number, number] {
  let lo = Infinity
  let hi = -Infinity
  for (const v of values) {
    if (Number.isFinite(v)) {
      if (v < lo) lo = v
      if (v > hi) hi = v
    }
  }
  if (lo === Infinity) throw new Error('extent of empty or non-finite data')
  if (lo === hi) return [lo - 1, hi + 1]
  return [lo, hi]
}

export function padded(domain: [number, number], fraction = 0.05): [number, number] {
  const pad = (domain[1] - domain[0]) * fraction
  return [domain[0] - pad, domain[1] + pad]
}

/** Round tick positions covering the domain, roughly `count` of them. */
export function ticks(domain: [number, number], count = 5): number[] {
  const span = domain[1] - domain[0]
  if (span <= 0) return [domain[0]]
  const rawStep = span / Math.max(1, count)
  const power = Math.pow(10, Math.floor(Math.log10(rawStep)))
  const candidates = [1, 2, 5, 10].map(m => m * power)
  const step = candidates.find(c => c >= rawStep) ?? candidates[3]
  const start = Math.ceil(domain[0] / step) * step
  const out: number[] = []
  for (let v = start; v <= domain[1] + step * 1e-9; v += step) {
    out.push(Math.abs(v) < step * 1e-9 ? 0 : Number(v.toPrecision(12)))
  }
  return out
}

const fmt = (v: number) => (Math.abs(v) >= 1000 || (v !== 0 && Math.abs(v) < 0.01) ? v.toExponential(1) : String(Number(v.toPrecision(6))))

export class SvgCanvas {
  readonly width: number
  readonly height: number
  private parts: string[] = []

  constructor(width: number, height: number) {
    this.width = width
    this.height = height
  }

  add(fragment: string): void {
    this.parts.push(fragment)
  }

  polyline(xs: number[], ys: number[], stroke: string, strokeWidth = 1.2, dash = ''): void {
    const points = xs.map((x, i) => `${x.toFixed(2)},${ys[i].toFixed(2)}`).join(' ')
    const dashAttr = dash ? ` stroke-dasharray="${dash}"` : ''
    this.add(`<polyline fill="none" stroke="${stroke}" stroke-width="${strokeWidth}"${dashAttr} points="${points}"/>`)
  }

  circle(x: number, y: number, r: number, fill: string, opacity = 1): void {
    this.add(`<circle cx="${x.toFixed(2)}" cy="${y.toFixed(2)}" r="${r}" fill="${fill}" fill-opacity="${opacity}"/>`)
  }

  rect(x: number, y: number, w: number, h: number, fill: string, opacity = 1): void {
    this.add(
      `<rect x="${x.toFixed(2)}" y="${y.toFixed(2)}" width="${Math.max(w, 0).toFixed(2)}" ` +
        `height="${Math.max(h, 0).toFixed(2)}" fill="${fill}" fill-opacity="${opacity.toFixed(3)}"/>`,
    )
  }

  line(x1: number, y1: number, x2: number, y2: number, stroke: string, strokeWidth = 1): void {
    this.add(
      `<line x1="${x1.toFixed(2)}" y1="${y1.toFixed(2)}" x2="${x2.toFixed(2)}" y2="${y2.toFixed(2)}" ` +
        `stroke="${stroke}" stroke-width="${strokeWidth}"/>`,
    )
  }

  text(x: number, y: number, content: string, options: { size?: number; anchor?: string; fill?: string; rotate?: number } = {}): void {
    const size = options.size ?? 11
    const anchor = options.anchor ?? 'start'
    const fill = options.fill ?? '#222'
    const rotate = options.rotate ? ` transform="rotate(${options.rotate} ${x} ${y})"` : ''
    this.add(
      `<text x="${x.toFixed(2)}" y="${y.toFixed(2)}" font-family="sans-serif" font-size="${size}" ` +
        `text-anchor="${anchor}" fill="${fill}"${rotate}>${escapeXml(content)}</text>`,
    )
  }

  axes(xScale: Scale, yScale: Scale, labels: { x?: string; y?: string; title?: string } = {}): void {
    const [x0, x1] = xScale.range
    const [y0, y1] = yScale.range // y0 is the bottom pixel (larger value)
    this.line(x0, y0, x1, y0, '#444')
    this.line(x0, y0, x0, y1, '#444')
    for (const t of ticks(xScale.domain)) {
      const px = xScale(t)
      this.line(px, y0, px, y0 + 4, '#444')
      this.text(px, y0 + 16, fmt(t), { anchor: 'middle', size: 10 })
    }
    for (const t of ticks(yScale.domain)) {
      const py = yScale(t)
      this.line(x0 - 4, py, x0, py, '#444')
      this.text(x0 - 7, py + 3, fmt(t), { anchor: 'end', size: 10 })
    }
    if (labels.x) this.text((x0 + x1) / 2, y0 + 32, labels.x, { anchor: 'middle' })
    if (labels.y) this.text(x0 - 38, (y0 + y1) / 2, labels.y, { anchor: 'middle', rotate: -90 })
    if (labels.title) this.text((x0 + x1) / 2, y1 - 8, labels.title, { anchor: 'middle', size: 13 })
  }

  legend(x: number, y: number, entries: Array<{ label: string; color: string; marker?: 'line' | 'dot' }>): void {
    entries.forEach((entry, i) => {
      const yy = y + i * 16
      if (entry.marker === 'dot') this.circle(x + 8, yy - 3, 3, entry.color)
      else this.line(x, yy - 3, x + 16, yy - 3, entry.color, 2)
      this.text(x + 22, yy, entry.label, { size: 10 })
    })
  }

  render(): string {
    return (
      `<svg xmlns="http://www.w3.org/2000/svg" width="${this.width}" height="${this.height}" ` +
      `viewBox="0 0 ${this.width} ${this.height}">\n<rect width="100%" height="100%" fill="white"/>\n` +
      this.parts.join('\n') +
      '\n</svg>\n'
    )
  }
}

function escapeXml(text: string): string {
  return text.replace(/&/g, '&amp;').replace(/</g, '&lt;').replace(/>/g, '&gt;')
}
