/**
 * Command-line entry point.
 *
 *   embed-export export --tokens <tokens.tsv> --out <store.bin> [--batch 32] [--model <id>]
 *
 * Exit codes: 0 success, 1 invalid input (bad flags, unreadable or malformed
 * token file, token/post mismatch), 2 model load failure.
 */

import { readFileSync } from "node:fs";
import { pathToFileURL } from "node:url";

import { DEFAULT_MODEL, loadModel, MODEL_PROFILES, ModelLoadError } from "./embedder.js";
import { parseTokenFile, TokenFileError } from "./tokens.js";
import { StoreFormatError, StoreWriter } from "./store.js";

const USAGE = `usage: embed-export export --tokens <file> --out <store> [--batch 32] [--model <id>]
models: ${Object.keys(MODEL_PROFILES).join(", ")} (default ${DEFAULT_MODEL})`;

interface ExportArgs {
  tokens: string;
  out: string;
  batch: number;
  model: string;
}

class UsageError extends Error {}

function parseArgs(argv: string[]): ExportArgs {
  if (argv[0] !== "export") {
    throw new UsageError(argv.length === 0 ? "missing subcommand" : `unknown subcommand ${argv[0]}`);
  }
  const flags = new Map<string, string>();
  for (let i = 1; i < argv.length; i += 2) {
    const name = argv[i];
    if (!name.startsWith("--")) throw new UsageError(`unexpected argument ${name}`);
    const value = argv[i + 1];
    if (value === undefined) throw new UsageError(`${name} needs a value`);
    flags.set(name.slice(2), value);
  }
  for (const required of ["tokens", "out"]) {
    if (!flags.has(required)) throw new UsageError(`--${required} is required`);
  }
  const batch = Number(flags.get("batch") ?? "32");
  if (!Number.isInteger(batch) || batch < 1) {
    throw new UsageError(`--batch must be a positive integer, got ${flags.get("batch")}`);
  }
  const known = new Set(["tokens", "out", "batch", "model"]);
  for (const name of flags.keys()) {
    if (!known.has(name)) throw new UsageError(`unknown flag --${name}`);
  }
  return {
    tokens: flags.get("tokens")!,
    out: flags.get("out")!,
    batch,
    model: flags.get("model") ?? DEFAULT_MODEL,
  };
}

export function main(argv: string[]): number {
  let args: ExportArgs;
  try {
    args = parseArgs(argv);
  } catch (err) {
    if (err instanceof UsageError) {
      console.error(`error: ${err.message}`);
      console.error(USAGE);
      return 1;
    }
    throw err;
  }

  let embedder;
  try {
    embedder = loadModel(args.model);
  } catch (err) {
    if (err instanceof ModelLoadError) {
      console.error(`model load failure: ${err.message}`);
      return 2;
    }
    throw err;
  }

  try {
    const posts = parseTokenFile(readFileSync(args.tokens, "utf8"));
    const writer = new StoreWriter(args.out, embedder.profile.dimension, embedder.profile.layers);
    for (let start = 0; start < posts.length; start += args.batch) {
      for (const entry of embedder.embedBatch(posts.slice(start, start + args.batch))) {
        writer.add(entry);
      }
    }
    const written = writer.close();
    if (written !== BigInt(posts.length)) {
      console.error(`error: token/post mismatch: ${posts.length} posts parsed, ${written} written`);
      return 1;
    }
    console.log(
      `wrote ${args.out}: ${written} posts, D=${embedder.profile.dimension}, ` +
        `L+1=${embedder.profile.layers} (${embedder.profile.id})`,
    );
    return 0;
  } catch (err) {
    if (err instanceof TokenFileError || err instanceof StoreFormatError) {
      console.error(`error: ${args.tokens}: ${err.message}`);
      return 1;
    }
    if (err instanceof Error && "code" in err && err.code === "ENOENT") {
      console.error(`error: ${err.message}`);
      return 1;
    }
    throw err;
  }
}

if (process.argv[1] && import.meta.url === pathToFileURL(process.argv[1]).href) {
  process.exit(main(process.argv.slice(2)));
}
