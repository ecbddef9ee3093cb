import { spawn } from 'node:child_process';
import type { AddressInfo } from 'node:net';
import type { Server } from 'node:http';
import { createApp } from '../src/app.js';
import { USERS, type Variant } from '../src/state.js';
import type { FixtureState } from '../src/state.js';

export interface RunningFixture {
  baseUrl: string;
  state: FixtureState;
  server: Server;
  close: () => Promise<void>;
}

export async function startFixture(variant: Variant): Promise<RunningFixture> {
  const { app, state } = createApp(variant);
  const server = app.listen(0, '127.0.0.1');
  await new Promise<void>((resolve, reject) => {
    server.once('listening', () => resolve());
    server.once('error', reject);
  });
  const port = (server.address() as AddressInfo).port;
  return {
    baseUrl: `http://127.0.0.1:${port}`,
    state,
    server,
    close: () => new Promise((resolve) => server.close(() => resolve())),
  };
}

export async function login(baseUrl: string, username: string): Promise<string> {
  const res = await fetch(`${baseUrl}/auth/login`, {
    method: 'POST',
    headers: { 'content-type': 'application/json' },
    body: JSON.stringify({ username, password: USERS[username].password }),
  });
  if (res.status !== 200) throw new Error(`login failed for ${username}: ${res.status}`);
  const doc = (await res.json()) as { token: string };
  return doc.token;
}

export function bearer(token: string): Record<string, string> {
  return { authorization: `Bearer ${token}` };
}

export interface CliResult {
  code: number;
  stdout: string;
  stderr: string;
}

// The scanner is consumed strictly through its CLI. Async spawn keeps this
// process's event loop free, so in-process fixture servers stay responsive
// while the scan runs against them.
export function proofscan(args: string[]): Promise<CliResult> {
  return new Promise((resolve, reject) => {
    const child = spawn('proofscan', args, { stdio: ['ignore', 'pipe', 'pipe'] });
    let stdout = '';
    let stderr = '';
    child.stdout.on('data', (d) => (stdout += d));
    child.stderr.on('data', (d) => (stderr += d));
    child.on('error', (err) =>
      reject(new Error(`could not run the proofscan CLI (is it installed?): ${err.message}`)),
    );
    child.on('close', (code) => resolve({ code: code ?? -1, stdout, stderr }));
  });
}

export function scanConfig(
  baseUrl: string,
  sentinelMarker: string,
  outDir: string,
  raceAttempts: number,
): Record<string, unknown> {
  return {
    base_url: baseUrl,
    api_spec: '/openapi.json',
    out_dir: outDir,
    sessions: [
      { name: 'alice', role: 'user', username: 'alice', password: USERS.alice.password },
      { name: 'bob', role: 'user', username: 'bob', password: USERS.bob.password },
      { name: 'root', role: 'admin', username: 'root', password: USERS.root.password },
    ],
    login: { path: '/auth/login', token_path: 'token', verify_path: '/me' },
    scope_exclude_paths: ['/openapi.json', '/reset', '/manifest'],
    callback: { host: '127.0.0.1', port: 0 },
    sentinels: [{ relative_path: 'secret/sentinel.txt', marker: sentinelMarker }],
    state_probes: [
      { path: '/wallet', session: 'alice', json_path: 'balance' },
      { path: '/wallet', session: 'bob', json_path: 'balance' },
    ],
    burst_size: 8,
    settle_ms: 150,
    timeout_s: 5.0,
    transport_retries: 1,
    race_attempts: raceAttempts,
    rng_seed: 11,
  };
}
