/** CLI entry: load the encoder, then serve stdio (default) or TCP.
 *
 * Usage: main.js [--model hash-768] [--pooling cls|mean] [--port N]
 * An encoder that cannot be loaded exits with code 2 before any banner.
 */

import process from "node:process";

import { loadEncoder, type Pooling } from "./encoder.js";
import { serveStreams, serveTcp } from "./server.js";

interface Args {
  model: string;
  pooling: Pooling;
  port: number | null;
}

export function parseArgs(argv: string[]): Args {
  const args: Args = { model: "hash-768", pooling: "cls", port: null };
  for (let i = 0; i < argv.length; i += 2) {
    const flag = argv[i];
    const value = argv[i + 1];
    if (value === undefined) {
      throw new Error(`flag ${flag} needs a value`);
    }
    switch (flag) {
      case "--model":
        args.model = value;
        break;
      case "--pooling":
        if (value !== "cls" && value !== "mean") {
          throw new Error(`--pooling must be cls or mean, got ${value}`);
        }
        args.pooling = value;
        break;
      case "--port": {
        const port = Number(value);
        if (!Number.isInteger(port) || port < 0 || port > 65535) {
          throw new Error(`--port must be a port number, got ${value}`);
        }
        args.port = port;
        break;
      }
      default:
        throw new Error(`unknown flag ${flag}`);
    }
  }
  return args;
}

async function main(): Promise<void> {
  let args: Args;
  try {
    args = parseArgs(process.argv.slice(2));
  } catch (err) {
    process.stderr.write(`usage error: ${err instanceof Error ? err.message : err}\n`);
    process.exit(2);
  }
  let encoder;
  try {
    encoder = await loadEncoder(args.model, args.pooling);
  } catch (err) {
    process.stderr.write(`encoder load failed: ${err instanceof Error ? err.message : err}\n`);
    process.exit(2);
  }
  if (args.port !== null) {
    const server = serveTcp(encoder, args.port);
    server.on("listening", () => {
      const address = server.address();
      const port = typeof address === "object" && address ? address.port : args.port;
      process.stderr.write(`listening on tcp port ${port}\n`);
    });
    return;
  }
  await serveStreams(encoder, process.stdin, process.stdout);
}

main().catch((err) => {
  process.stderr.write(`fatal: ${err}\n`);
  process.exit(2);
});
