/** Minimal CSV reading for the experiment output schema (numeric, unquoted). */
import { readFileSync } from 'node:fs'

export interface Table {
  columns: string[]
  rows: string[][]
}

export class MissingColumnError extends Error {}
export class NoDataError extends Error {}

export function readCsv(path: string): Table {
  const text = readFileSync(path, 'utf8')
  const lines = text.split(/\r?\n/).filter(line => line.length > 0)
  if (lines.length === 0) throw new NoDataError(`no data: ${path} is empty`)
  const columns = lines[0].split(',')
  const rows = lines.slice(1).map(line => line.split(','))
  for (const row of rows) {
    if (row.length !== columns.length) {
      throw new Error(`ragged row in ${path}: expected ${columns.length} fields, got ${row.length}`)
    }
  }
  return { columns, rows }
}

export function requireColumns(table: Table, names: string[], path: string): void {
  for (const name of names) {
    if (!table.columns.includes(name)) {
      throw new MissingColumnError(`missing column '${name}' in ${path} (found: ${table.columns.join(', ')})`)
    }
  }
}

export function numericColumn(table: Table, name: string): number[] {
  const index = table.columns.indexOf(name)
  return table.rows.map(row => Number(row[index]))
}

export function stringColumn(table: Table, name: string): string[] {
  const index = table.columns.indexOf(name)
  return table.rows.map(row => row[index])
}
