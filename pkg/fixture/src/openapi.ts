// OpenAPI-subset description of the scannable surface. Control routes
// (/openapi.json, /reset, /manifest) are deliberately not listed.

type Dict = Record<string, unknown>;

function op(summary: string, extra: Dict = {}): Dict {
  return { summary, responses: { '200': { description: 'ok' } }, ...extra };
}

function q(name: string, example?: string): Dict {
  const schema: Dict = { type: 'string' };
  if (example !== undefined) schema.example = example;
  return { name, in: 'query', required: true, schema };
}

function jsonBody(props: Dict, required: string[]): Dict {
  return {
    content: {
      'application/json': {
        schema: { type: 'object', properties: props, required },
      },
    },
  };
}

export function buildOpenapi(baseUrl: string): Dict {
  return {
    openapi: '3.0.3',
    info: { title: 'fixture', version: '1.0' },
    servers: [{ url: baseUrl }],
    security: [{ bearerAuth: [] }],
    components: {
      securitySchemes: {
        bearerAuth: { type: 'http', scheme: 'bearer', bearerFormat: 'JWT' },
      },
    },
    paths: {
      '/auth/login': {
        post: op('login', {
          security: [],
          requestBody: jsonBody(
            { username: { type: 'string' }, password: { type: 'string' } },
            ['username', 'password'],
          ),
        }),
      },
      '/me': { get: op('current identity') },
      '/notes': {
        get: op('list own notes'),
        post: op('create note', {
          requestBody: jsonBody(
            { text: { type: 'string', example: 'shopping list' } },
            ['text'],
          ),
        }),
      },
      '/notes/{note_id}': {
        get: op('read one note', {
          parameters: [
            { name: 'note_id', in: 'path', required: true, schema: { type: 'integer' } },
          ],
        }),
      },
      '/search': { get: op('product search', { security: [], parameters: [q('q', 'widget')] }) },
      '/greet': { get: op('greeting page', { security: [], parameters: [q('name', 'friend')] }) },
      '/render': { get: op('text preview', { security: [], parameters: [q('text', 'plain text')] }) },
      '/files': { get: op('fetch a doc file', { security: [], parameters: [q('file', 'readme.txt')] }) },
      '/ping': {
        post: op('connectivity check', {
          security: [],
          requestBody: jsonBody({ host: { type: 'string', example: 'localhost' } }, ['host']),
        }),
      },
      '/orders': {
        post: op('place an order', {
          requestBody: jsonBody(
            {
              item: { type: 'string', example: 'widget' },
              quantity: { type: 'integer', example: 1 },
            },
            ['item', 'quantity'],
          ),
        }),
      },
      '/wallet': { get: op('wallet balance') },
      '/transfer': {
        post: op('transfer funds', {
          requestBody: jsonBody(
            { to: { type: 'string', example: 'bob' }, amount: { type: 'number', example: 25 } },
            ['to', 'amount'],
          ),
        }),
      },
      '/transfer-atomic': {
        post: op('transfer funds (atomic counterpart)', {
          requestBody: jsonBody(
            { to: { type: 'string', example: 'bob' }, amount: { type: 'number', example: 25 } },
            ['to', 'amount'],
          ),
        }),
      },
      '/import': {
        post: op('import a feed', {
          requestBody: jsonBody(
            {
              url: {
                type: 'string',
                format: 'uri',
                example: 'https://example.com/feed.xml',
              },
            },
            ['url'],
          ),
        }),
      },
      '/admin/stats': { get: op('admin dashboard numbers') },
    },
  };
}
