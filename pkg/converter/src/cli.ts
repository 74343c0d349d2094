#!/usr/bin/env node
/**
 * rml-convert <archive.pkl> <out.amcd>
 *
 * Exit codes mirror the classifier CLI: 0 success, 2 usage, 3 I/O,
 * 4 archive integrity.
 */

import { IntegrityError, convert } from './convert';

export function main(argv: string[]): number {
  if (argv.length !== 2) {
    process.stderr.write('usage: rml-convert <archive.pkl> <out.amcd>\n');
    return 2;
  }
  const [inPath, outPath] = argv;
  try {
    const summary = convert(inPath, outPath);
    process.stdout.write(`wrote ${summary.nFrames} frames to ${outPath}\n`);
    process.stdout.write('per-class counts:\n');
    for (const [name, count] of summary.perClass) {
      process.stdout.write(`  ${name.padEnd(8)} ${count}\n`);
    }
    process.stdout.write('per-SNR counts:\n');
    for (const [snr, count] of [...summary.perSnr].sort((a, b) => a[0] - b[0])) {
      process.stdout.write(`  ${String(snr).padStart(4)} dB ${count}\n`);
    }
    return 0;
  } catch (err) {
    if (err instanceof IntegrityError) {
      process.stderr.write(`integrity error: ${err.message}\n`);
      return 4;
    }
    if (err instanceof Error && 'code' in err) {
      process.stderr.write(`i/o error: ${err.message}\n`);
      return 3;
    }
    throw err;
  }
}

if (require.main === module) {
  process.exit(main(process.argv.slice(2)));
}
