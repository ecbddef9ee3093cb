// The fixture web application. Two variants share one API surface:
// 'seeded' exhibits exactly the eight manifest flaws, 'benign' is the
// patched counterpart. Every flaw lives behind a state.seeded() branch so
// the diff between variants is the vulnerability set and nothing else.

import express, { type Request, type Response } from 'express';
import { buildManifest } from './manifest.js';
import { buildOpenapi } from './openapi.js';
import { signHS256, verifyToken } from './jwt.js';
import { FixtureState, PRODUCTS, ROOT_FILES, USERS, type Variant } from './state.js';

const sleep = (ms: number) => new Promise((r) => setTimeout(r, ms));

function escapeHtml(s: string): string {
  return s
    .replace(/&/g, '&amp;')
    .replace(/</g, '&lt;')
    .replace(/>/g, '&gt;')
    .replace(/"/g, '&quot;')
    .replace(/'/g, '&#x27;');
}

function qstr(req: Request, name: string): string | undefined {
  const v = req.query[name];
  if (typeof v === 'string') return v;
  if (Array.isArray(v) && typeof v[0] === 'string') return v[0];
  return undefined;
}

export function createApp(variant: Variant) {
  const state = new FixtureState(variant);
  const app = express();
  app.disable('x-powered-by');
  app.set('etag', false);
  // Parse JSON bodies regardless of declared content type: black-box
  // clients are not trusted to label their payloads.
  app.use(express.json({ type: () => true }));

  const identity = (req: Request): [string, string] | null => {
    const auth = req.headers.authorization ?? '';
    if (!auth.toLowerCase().startsWith('bearer ')) return null;
    const claims = verifyToken(auth.slice(7).trim(), state.secret, {
      acceptAlgNone: state.seeded(),
    });
    if (!claims) return null;
    const sub = claims.sub;
    if (typeof sub !== 'string' || !(sub in USERS)) return null;
    return [sub, USERS[sub].role];
  };

  const denied = (res: Response) => res.status(401).json({ error: 'auth required' });

  app.get('/', (_req, res) => {
    res.json({ service: 'fixture', variant: state.variant, status: 'ok' });
  });

  app.get('/openapi.json', (req, res) => {
    const base = `http://${req.headers.host ?? '127.0.0.1'}`;
    res.json(buildOpenapi(base));
  });

  app.get('/manifest', (_req, res) => {
    res.json(buildManifest(state));
  });

  app.post('/reset', (_req, res) => {
    state.reset();
    res.json({ status: 'reset' });
  });

  app.post('/auth/login', (req, res) => {
    const { username, password } = (req.body ?? {}) as Record<string, unknown>;
    const user = typeof username === 'string' ? USERS[username] : undefined;
    if (!user || user.password !== password) {
      return res.status(401).json({ error: 'bad credentials' });
    }
    const token = signHS256(
      { sub: username, role: user.role, iat: Math.floor(Date.now() / 1000) },
      state.secret,
    );
    res.json({ token, role: user.role });
  });

  app.get('/me', (req, res) => {
    const ident = identity(req);
    if (!ident) return denied(res);
    res.json({ user: ident[0], role: ident[1] });
  });

  app.get('/notes', (req, res) => {
    const ident = identity(req);
    if (!ident) return denied(res);
    const ids = [...state.notes.values()]
      .filter((n) => n.owner === ident[0])
      .map((n) => n.id)
      .sort((a, b) => a - b);
    res.json({ note_ids: ids });
  });

  app.post('/notes', (req, res) => {
    const ident = identity(req);
    if (!ident) return denied(res);
    const text = (req.body ?? {}).text;
    if (typeof text !== 'string' || !text) {
      return res.status(400).json({ error: 'text required' });
    }
    const id = state.nextNoteId++;
    state.notes.set(id, { id, owner: ident[0], text });
    res.status(201).json({ id });
  });

  app.get('/notes/:note_id', (req, res) => {
    const ident = identity(req);
    if (!ident) return denied(res);
    if (!/^\d+$/.test(req.params.note_id)) {
      return res.status(404).json({ error: 'not found' });
    }
    const note = state.notes.get(Number(req.params.note_id));
    if (!note) return res.status(404).json({ error: 'not found' });
    if (note.owner !== ident[0] && !state.seeded()) {
      // Hide the existence of other users' notes.
      return res.status(404).json({ error: 'not found' });
    }
    res.json({ id: note.id, text: note.text });
  });

  // /search: in the seeded variant q lands in a simulated string-built SQL
  // query, and the response reflects the Origin header with credentials.

  const like = (q: string) => PRODUCTS.filter((p) => p.toLowerCase().includes(q.toLowerCase()));

  const fakeSql = (q: string): { rows?: string[]; error?: string } => {
    const union = "' UNION SELECT '";
    const at = q.indexOf(union);
    if (at >= 0) {
      const left = q.slice(0, at);
      const rest = q.slice(at + union.length);
      return { rows: [...like(left), rest.split("'")[0]] };
    }
    if (q.endsWith("' AND '1'='1")) return { rows: like(q.slice(0, -"' AND '1'='1".length)) };
    if (q.endsWith("' AND '1'='2")) return { rows: [] };
    const quotes = (q.match(/'/g) ?? []).length;
    if (quotes % 2 === 1) return { error: 'syntax error in SQL statement' };
    return { rows: like(q) };
  };

  app.get('/search', (req, res) => {
    if (state.seeded()) {
      const origin = req.headers.origin;
      if (origin) {
        res.set('Access-Control-Allow-Origin', origin);
        res.set('Access-Control-Allow-Credentials', 'true');
      }
    }
    const q = qstr(req, 'q');
    if (q === undefined) return res.status(400).json({ error: 'q required' });
    if (state.seeded()) {
      const out = fakeSql(q);
      if (out.error) return res.status(500).json({ error: out.error });
      return res.json({ results: out.rows });
    }
    res.json({ results: like(q) });
  });

  app.get('/greet', (req, res) => {
    const name = qstr(req, 'name') ?? '';
    res
      .type('text/html; charset=utf-8')
      .send(`<html><body><p>Hello, ${escapeHtml(name)}!</p></body></html>`);
  });

  app.get('/render', (req, res) => {
    res.json({ rendered: qstr(req, 'text') ?? '' });
  });

  // /files: the seeded resolver lets ".." climb above the served root into
  // the outside file map; the benign one refuses dotted paths outright.

  const resolveSeeded = (name: string): string | undefined => {
    const stack: string[] = [];
    let depth = 0;
    for (const part of name.split('/')) {
      if (part === '' || part === '.') continue;
      if (part === '..') {
        if (stack.length) stack.pop();
        else depth -= 1;
      } else {
        stack.push(part);
      }
    }
    const key = stack.join('/');
    return depth < 0 ? state.outsideFiles[key] : ROOT_FILES[key];
  };

  app.get('/files', (req, res) => {
    const name = qstr(req, 'file');
    if (!name) return res.status(400).json({ error: 'file required' });
    const content = state.seeded()
      ? resolveSeeded(name)
      : name.includes('..')
        ? undefined
        : ROOT_FILES[name];
    if (content === undefined) return res.status(404).json({ error: 'not found' });
    res.type('text/plain; charset=utf-8').send(content);
  });

  app.post('/ping', (req, res) => {
    const host = String((req.body ?? {}).host ?? '');
    if (!/^[A-Za-z0-9_.:\-]+$/.test(host)) {
      return res.status(400).json({ error: 'invalid host' });
    }
    res.type('text/plain; charset=utf-8').send(`PING ${host}: 1 packets, 0% loss\n`);
  });

  app.post('/orders', (req, res) => {
    const ident = identity(req);
    if (!ident) return denied(res);
    const body = (req.body ?? {}) as Record<string, unknown>;
    const qty = Number(body.quantity);
    if (!Number.isInteger(qty)) {
      return res.status(400).json({ error: 'quantity must be an integer' });
    }
    if (qty < 1 && !state.seeded()) {
      return res.status(400).json({ error: 'quantity must be at least 1' });
    }
    const cost = qty * 5;
    if (state.wallets[ident[0]] < cost) {
      return res.status(402).json({ error: 'insufficient funds' });
    }
    state.wallets[ident[0]] -= cost;
    state.orders.push({ user: ident[0], item: body.item, quantity: qty });
    res.status(201).json({ order_id: state.orders.length, charged: cost });
  });

  app.get('/wallet', (req, res) => {
    const ident = identity(req);
    if (!ident) return denied(res);
    res.json({ balance: state.wallets[ident[0]], currency: 'USD' });
  });

  const validTransfer = (
    req: Request,
    res: Response,
  ): { from: string; to: string; amount: number } | null => {
    const ident = identity(req);
    if (!ident) {
      denied(res);
      return null;
    }
    const body = (req.body ?? {}) as Record<string, unknown>;
    const amount = Number(body.amount);
    if (!Number.isFinite(amount)) {
      res.status(400).json({ error: 'amount must be a number' });
      return null;
    }
    if (amount <= 0) {
      res.status(400).json({ error: 'amount must be positive' });
      return null;
    }
    const to = body.to;
    if (typeof to !== 'string' || !(to in USERS) || to === ident[0]) {
      res.status(400).json({ error: 'bad destination' });
      return null;
    }
    return { from: ident[0], to, amount };
  };

  const atomicTransfer = (res: Response, t: { from: string; to: string; amount: number }) => {
    if (state.wallets[t.from] < t.amount) {
      return res.status(402).json({ error: 'insufficient funds' });
    }
    state.wallets[t.from] -= t.amount;
    state.wallets[t.to] += t.amount;
    res.json({ status: 'sent', to: t.to, amount: t.amount });
  };

  app.post('/transfer', async (req, res) => {
    const t = validTransfer(req, res);
    if (!t) return;
    if (!state.seeded()) return atomicTransfer(res, t);
    // Read the balance, yield the event loop, then write the stale value
    // back: concurrent transfers overwrite each other (lost update).
    const bal = state.wallets[t.from];
    await sleep(40);
    if (bal < t.amount) {
      return res.status(402).json({ error: 'insufficient funds' });
    }
    state.wallets[t.from] = bal - t.amount;
    state.wallets[t.to] += t.amount;
    res.json({ status: 'sent', to: t.to, amount: t.amount });
  });

  app.post('/transfer-atomic', (req, res) => {
    const t = validTransfer(req, res);
    if (!t) return;
    atomicTransfer(res, t);
  });

  app.post('/import', async (req, res) => {
    const ident = identity(req);
    if (!ident) return denied(res);
    const url = String((req.body ?? {}).url ?? '');
    if (!state.seeded()) {
      let host = '';
      try {
        host = new URL(url).hostname;
      } catch {
        // fall through to the allowlist rejection
      }
      if (host !== 'example.com') {
        return res.status(400).json({ error: 'host not allowed' });
      }
      return res.status(202).json({ status: 'queued' });
    }
    try {
      const resp = await fetch(url, { signal: AbortSignal.timeout(2000) });
      const data = await resp.arrayBuffer();
      state.fetchedUrls.push(url);
      res.json({ status: 'fetched', bytes: data.byteLength });
    } catch (exc) {
      res.status(502).json({ error: `fetch failed: ${(exc as Error).name}` });
    }
  });

  app.get('/admin/stats', (req, res) => {
    const ident = identity(req);
    if (!ident) return denied(res);
    if (ident[1] !== 'admin') return res.status(403).json({ error: 'admin only' });
    res.json({ status: 'ok', users: Object.keys(USERS).length, plan: 'standard' });
  });

  app.use((_req, res) => {
    res.status(404).json({ error: 'not found' });
  });

  // Body-parse failures and handler throws both land here as JSON.
  app.use((err: Error & { status?: number }, _req: Request, res: Response, _next: () => void) => {
    res.status(err.status ?? 500).json({ error: err.status ? 'bad request' : 'internal error' });
  });

  return { app, state };
}
