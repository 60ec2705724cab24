/**
 * Provider entry point: `node dist/main.js [--config <path>] <job_manifest_path>`
 * (config may also come from the SALIENCE_ADAPTER_CONFIG environment variable).
 */
import { serveJob } from './adapter';
import { loadConfig } from './config';

async function main(): Promise<number> {
  const args = process.argv.slice(2);
  let configPath: string | undefined;
  let manifestPath: string | undefined;
  for (let i = 0; i < args.length; i++) {
    if (args[i] === '--config') {
      configPath = args[++i];
    } else if (!manifestPath) {
      manifestPath = args[i];
    } else {
      console.error(`unexpected argument: ${args[i]}`);
      return 2;
    }
  }
  if (!manifestPath) {
    console.error('usage: adapter [--config <path>] <job_manifest_path>');
    return 2;
  }
  const config = loadConfig(configPath);
  await serveJob(manifestPath, config);
  return 0;
}

main().then(
  (code) => process.exit(code),
  (err) => {
    console.error(err instanceof Error ? err.message : String(err));
    process.exit(1);
  },
);
