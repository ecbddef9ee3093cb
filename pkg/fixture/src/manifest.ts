// Machine-readable ground truth served at /manifest. The seeded variant
// lists exactly the eight flaws it exhibits; the benign variant serves an
// empty entry list over the identical API surface. Severities are the
// CVSS v3.1 band of each entry's base vector (docs/exploits.md holds the
// manual exploitation sequences that back every entry).

import type { FixtureState, Variant } from './state.js';

export interface ManifestEntry {
  id: string;
  name: string;
  cwe: number;
  severity: 'critical' | 'high' | 'medium' | 'low';
  endpoints: string[];
  disposition: 'vulnerable';
  cvss: string;
  exploit: string;
}

export const SEEDED_ENTRIES: ManifestEntry[] = [
  {
    id: 'fx-idor',
    name: 'cross-user note read',
    cwe: 639,
    severity: 'medium',
    endpoints: ['GET /notes/{note_id}'],
    disposition: 'vulnerable',
    cvss: 'CVSS:3.1/AV:N/AC:L/PR:L/UI:N/S:U/C:H/I:N/A:N',
    exploit: "login as bob, GET /notes/<alice's id>: returns her note body",
  },
  {
    id: 'fx-algnone',
    name: 'alg=none token accepted',
    cwe: 287,
    severity: 'critical',
    endpoints: ['GET /me', 'GET /notes', 'GET /wallet', 'GET /notes/{note_id}'],
    disposition: 'vulnerable',
    cvss: 'CVSS:3.1/AV:N/AC:L/PR:N/UI:N/S:U/C:H/I:H/A:N',
    exploit: 'craft header {"alg":"none"} + any claims, empty signature: authenticated',
  },
  {
    id: 'fx-sqli',
    name: 'search query concatenated into SQL',
    cwe: 89,
    severity: 'high',
    endpoints: ['GET /search'],
    disposition: 'vulnerable',
    cvss: 'CVSS:3.1/AV:N/AC:L/PR:N/UI:N/S:U/C:H/I:N/A:N',
    exploit: "GET /search?q=x' UNION SELECT 'zz'-- : injected row in results",
  },
  {
    id: 'fx-traversal',
    name: 'file fetch resolves past the served root',
    cwe: 22,
    severity: 'high',
    endpoints: ['GET /files'],
    disposition: 'vulnerable',
    cvss: 'CVSS:3.1/AV:N/AC:L/PR:N/UI:N/S:U/C:H/I:N/A:N',
    exploit: 'GET /files?file=../secret/sentinel.txt : sentinel marker returned',
  },
  {
    id: 'fx-negqty',
    name: 'negative order quantity credits the wallet',
    cwe: 840,
    severity: 'medium',
    endpoints: ['POST /orders'],
    disposition: 'vulnerable',
    cvss: 'CVSS:3.1/AV:N/AC:L/PR:L/UI:N/S:U/C:N/I:H/A:N',
    exploit: 'POST /orders {"item":"widget","quantity":-5}: balance rises by 25',
  },
  {
    id: 'fx-race',
    name: 'transfer writes back a stale balance',
    cwe: 367,
    severity: 'medium',
    endpoints: ['POST /transfer'],
    disposition: 'vulnerable',
    cvss: 'CVSS:3.1/AV:N/AC:H/PR:L/UI:N/S:U/C:N/I:H/A:N',
    exploit: '8 concurrent POST /transfer {"to":"bob","amount":25}: wallet sum rises',
  },
  {
    id: 'fx-cors',
    name: 'origin reflected with credentials allowed',
    cwe: 942,
    severity: 'medium',
    endpoints: ['GET /search'],
    disposition: 'vulnerable',
    cvss: 'CVSS:3.1/AV:N/AC:L/PR:N/UI:R/S:U/C:H/I:N/A:N',
    exploit: 'GET /search?q=a with Origin: https://evil.example: origin echoed, credentials true',
  },
  {
    id: 'fx-ssrf',
    name: 'import fetches the submitted url server-side',
    cwe: 918,
    severity: 'medium',
    endpoints: ['POST /import'],
    disposition: 'vulnerable',
    cvss: 'CVSS:3.1/AV:N/AC:L/PR:L/UI:N/S:C/C:L/I:N/A:N',
    exploit: 'POST /import {"url":"http://127.0.0.1:<port>/x"}: listener sees the hit',
  },
];

export interface SentinelEntry {
  relative_path: string;
  marker: string;
}

export interface Manifest {
  fixture: Variant;
  entries: ManifestEntry[];
  reset_path: string;
  sentinels: SentinelEntry[];
}

export function buildManifest(state: FixtureState): Manifest {
  return {
    fixture: state.variant,
    entries: state.seeded() ? SEEDED_ENTRIES : [],
    reset_path: '/reset',
    sentinels: [{ relative_path: 'secret/sentinel.txt', marker: state.sentinelMarker }],
  };
}
