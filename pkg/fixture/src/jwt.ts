// Minimal HS256 JWT, written from scratch so the fixture stays independent
// of the scanner's token handling. The verify side optionally trusts
// alg=none tokens; that is the seeded authentication flaw.

import { createHmac, timingSafeEqual } from 'node:crypto';

export type Claims = Record<string, unknown>;

export function b64url(raw: Buffer | string): string {
  return Buffer.from(raw).toString('base64url');
}

export function b64urlDecode(text: string): Buffer {
  return Buffer.from(text, 'base64url');
}

export function signHS256(claims: Claims, secret: string): string {
  const header = { alg: 'HS256', typ: 'JWT', kid: 'primary' };
  const signing = b64url(JSON.stringify(header)) + '.' + b64url(JSON.stringify(claims));
  const sig = createHmac('sha256', secret).update(signing).digest();
  return signing + '.' + b64url(sig);
}

export interface VerifyOptions {
  acceptAlgNone: boolean;
}

export function verifyToken(token: string, secret: string, opts: VerifyOptions): Claims | null {
  const parts = token.split('.');
  if (parts.length !== 3) return null;
  let header: unknown;
  let payload: unknown;
  try {
    header = JSON.parse(b64urlDecode(parts[0]).toString('utf8'));
    payload = JSON.parse(b64urlDecode(parts[1]).toString('utf8'));
  } catch {
    return null;
  }
  if (typeof header !== 'object' || header === null) return null;
  if (typeof payload !== 'object' || payload === null) return null;
  const alg = String((header as Claims).alg ?? '').toLowerCase();
  if (alg === 'none') {
    return opts.acceptAlgNone ? (payload as Claims) : null;
  }
  if (alg !== 'hs256' || !parts[2]) return null;
  const signing = parts[0] + '.' + parts[1];
  const expected = createHmac('sha256', secret).update(signing).digest();
  const given = b64urlDecode(parts[2]);
  if (given.length !== expected.length || !timingSafeEqual(given, expected)) return null;
  return payload as Claims;
}
