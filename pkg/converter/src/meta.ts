/**
 * Metadata CSV for image-folder sources: header `filename,patient,label`
 * (any column order), one row per image, integer labels. Plain commas only;
 * quoting is not supported.
 */

export class MetaError extends Error {}

export interface MetaRow {
  filename: string;
  patient: string;
  label: number;
}

export function parseMetadataCsv(text: string): MetaRow[] {
  const lines = text
    .split(/\r?\n/)
    .map((l) => l.trim())
    .filter((l) => l.length > 0);
  if (lines.length < 2) throw new MetaError('metadata CSV needs a header row and at least one data row');
  const header = lines[0].split(',').map((h) => h.trim().toLowerCase());
  const fileCol = header.indexOf('filename');
  const patientCol = header.indexOf('patient');
  const labelCol = header.indexOf('label');
  if (fileCol < 0 || patientCol < 0 || labelCol < 0) {
    throw new MetaError(`metadata CSV header must contain filename, patient, label; got ${lines[0]}`);
  }
  const rows: MetaRow[] = [];
  for (const [index, line] of lines.slice(1).entries()) {
    const cells = line.split(',').map((c) => c.trim());
    if (cells.length !== header.length) {
      throw new MetaError(`metadata row ${index + 2} has ${cells.length} cells, header has ${header.length}`);
    }
    const label = Number.parseInt(cells[labelCol], 10);
    if (!Number.isInteger(label) || label < 0 || String(label) !== cells[labelCol]) {
      throw new MetaError(`metadata row ${index + 2}: label must be a non-negative integer, got ${cells[labelCol]}`);
    }
    if (!cells[fileCol] || !cells[patientCol]) {
      throw new MetaError(`metadata row ${index + 2}: empty filename or patient`);
    }
    rows.push({ filename: cells[fileCol], patient: cells[patientCol], label });
  }
  return rows;
}
