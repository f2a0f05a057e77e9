#!/usr/bin/env node
/**
 * plots <figure-name> --run-dir <dir> --out <path>
 *
 * Figure names: snapshots, cost-curves, recon-initial, final-compare.
 * Renders an SVG from a run directory's CSV/JSON artifacts; writes the
 * output only after the figure renders completely.
 */

import { writeFileSync } from "node:fs";
import { pathToFileURL } from "node:url";
import yargs from "yargs";
import { hideBin } from "yargs/helpers";
import { FIGURE_NAMES, FigureName, renderNamedFigure } from "./figures.js";
import { PlotsError } from "./schema.js";

export async function main(argv: string[]): Promise<number> {
  try {
    const args = await yargs(argv)
      .command("$0 <figure>", "render a figure from a run directory", (y) =>
        y.positional("figure", {
          choices: FIGURE_NAMES,
          describe: "figure to render",
          type: "string",
        }))
      .option("run-dir", { type: "string", demandOption: true, describe: "run directory" })
      .option("out", { type: "string", demandOption: true, describe: "output SVG path" })
      .strict()
      .fail((msg) => { throw new PlotsError(msg); })
      .parse();
    const svg = renderNamedFigure(args.figure as FigureName, args["run-dir"] as string);
    writeFileSync(args.out as string, svg);
  } catch (e) {
    if (e instanceof PlotsError || e instanceof Error) {
      console.error(`plots: ${e.message}`);
      return 1;
    }
    throw e;
  }
  return 0;
}

const entry = process.argv[1] ? pathToFileURL(process.argv[1]).href : "";
if (import.meta.url === entry) {
  main(hideBin(process.argv)).then((code) => { process.exitCode = code; });
}
