// CLI entry: serve one fixture variant on a port.
//   node dist/server.js --variant seeded --port 4000

import { parseArgs } from 'node:util';
import { createApp } from './app.js';
import type { Variant } from './state.js';

const { values } = parseArgs({
  options: {
    variant: { type: 'string', default: 'seeded' },
    port: { type: 'string', default: '4000' },
    host: { type: 'string', default: '127.0.0.1' },
  },
});

const variant = values.variant as string;
if (variant !== 'seeded' && variant !== 'benign') {
  console.error(`unknown variant ${JSON.stringify(variant)}: use seeded or benign`);
  process.exit(2);
}
const port = Number(values.port);
if (!Number.isInteger(port) || port < 0 || port > 65535) {
  console.error(`bad port ${JSON.stringify(values.port)}`);
  process.exit(2);
}

const { app } = createApp(variant as Variant);
const server = app.listen(port, values.host as string, () => {
  const addr = server.address();
  const bound = typeof addr === 'object' && addr ? addr.port : port;
  console.log(`fixture (${variant}) listening on http://${values.host}:${bound}`);
});
server.on('error', (err: NodeJS.ErrnoException) => {
  console.error(`startup failed: ${err.code ?? err.message}`);
  process.exit(1);
});
