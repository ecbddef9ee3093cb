// In-memory application state with a fixed reset snapshot. No persistence:
// /reset is the only way state moves backwards, and two resets equal one.

import { randomBytes } from 'node:crypto';

export type Variant = 'seeded' | 'benign';

export interface Note {
  id: number;
  owner: string;
  text: string;
}

export interface Order {
  user: string;
  item: unknown;
  quantity: number;
}

export const USERS: Record<string, { password: string; role: string }> = {
  alice: { password: 'alice-9-looking-glass', role: 'user' },
  bob: { password: 'bob-7-crane-lift', role: 'user' },
  root: { password: 'root-3-skeleton-key', role: 'admin' },
};

export const PRODUCTS = ['alpha widget', 'beta gadget', 'delta widget pro', 'gamma gizmo'];

// Files reachable through /files without leaving the served root.
export const ROOT_FILES: Record<string, string> = {
  'readme.txt': 'hello from the docs folder\n',
  'notes.md': '# notes\nplain contents\n',
};

export class FixtureState {
  readonly variant: Variant;
  readonly secret: string;
  readonly sentinelMarker: string;
  readonly outsideFiles: Record<string, string>;

  notes = new Map<number, Note>();
  nextNoteId = 1;
  wallets: Record<string, number> = {};
  orders: Order[] = [];
  fetchedUrls: string[] = [];

  constructor(variant: Variant) {
    this.variant = variant;
    this.secret = 'fix-' + randomBytes(8).toString('hex');
    this.sentinelMarker = 'SENTINEL-' + randomBytes(6).toString('hex');
    this.outsideFiles = {
      'secret/sentinel.txt': `${this.sentinelMarker} planted outside the web root\n`,
      'etc/passwd': 'root:x:0:0:root:/root:/bin/sh\ndaemon:x:1:1::/:/usr/sbin/nologin\n',
    };
    this.reset();
  }

  seeded(): boolean {
    return this.variant === 'seeded';
  }

  reset(): void {
    this.notes = new Map();
    this.nextNoteId = 1;
    this.wallets = { alice: 10_000, bob: 100, root: 0 };
    this.orders = [];
    this.fetchedUrls = [];
  }
}
