/** Boots the reference reward service for the contract tests. */

import { ChildProcess, spawn } from "node:child_process";
import { SERVICE_PORT, SERVICE_URL } from "./config.js";

let proc: ChildProcess | undefined;

async function waitForHealthy(timeoutMs = 30_000): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  while (Date.now() < deadline) {
    try {
      const res = await fetch(`${SERVICE_URL}/healthz`);
      if (res.ok) return;
    } catch {
      // not up yet
    }
    await new Promise((r) => setTimeout(r, 200));
  }
  throw new Error(`reward service did not become healthy on port ${SERVICE_PORT}`);
}

export default async function setup(): Promise<() => Promise<void>> {
  proc = spawn("python3", ["-m", "vicrit.service"], {
    env: { ...process.env, VICRIT_PORT: String(SERVICE_PORT) },
    stdio: ["ignore", "ignore", "inherit"],
  });
  proc.on("exit", (code) => {
    if (code !== null && code !== 0) {
      console.error(`reward service exited with code ${code}`);
    }
  });
  await waitForHealthy();
  return async () => {
    proc?.kill("SIGTERM");
  };
}
