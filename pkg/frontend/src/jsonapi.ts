/** Wire types and the one fetch wrapper everything goes through. */

export const MEDIA_TYPE = 'application/vnd.api+json';

export interface ResourceObject<A = Record<string, unknown>> {
  type: string;
  id: string;
  attributes: A;
  relationships?: Record<string, { data: Array<{ type: string; id: string }> }>;
}

export interface ErrorObject {
  status: string;
  code: string;
  detail: string;
  source?: { pointer: string };
}

export interface Document<D> {
  data?: D;
  errors?: ErrorObject[];
  meta?: Record<string, unknown>;
}

/** Non-2xx response, carrying the parsed error objects. */
export class ApiError extends Error {
  readonly status: number;
  readonly errors: ErrorObject[];

  constructor(status: number, errors: ErrorObject[]) {
    super(errors[0] ? `${errors[0].code}: ${errors[0].detail}` : `HTTP ${status}`);
    this.name = 'ApiError';
    this.status = status;
    this.errors = errors;
  }

  /** First error code, for switch-style handling. */
  get code(): string {
    return this.errors[0]?.code ?? '';
  }
}

/** Network-level failure (offline, refused, DNS). Queued work should retry. */
export class NetworkError extends Error {
  constructor(cause: unknown) {
    super(`network failure: ${String(cause)}`);
    this.name = 'NetworkError';
  }
}

export type FetchLike = (url: string, init: RequestInit) => Promise<Response>;

export interface RequestOptions {
  method?: string;
  token?: string;
  body?: unknown;
}

export async function requestDocument<D>(
  fetchFn: FetchLike,
  url: string,
  options: RequestOptions = {},
): Promise<{ status: number; document: Document<D> }> {
  const headers: Record<string, string> = { Accept: MEDIA_TYPE };
  if (options.token) headers['Authorization'] = `Bearer ${options.token}`;
  if (options.body !== undefined) headers['Content-Type'] = MEDIA_TYPE;

  let response: Response;
  try {
    response = await fetchFn(url, {
      method: options.method ?? 'GET',
      headers,
      body: options.body === undefined ? undefined : JSON.stringify(options.body),
    });
  } catch (cause) {
    throw new NetworkError(cause);
  }

  let parsed: Document<D>;
  try {
    parsed = (await response.json()) as Document<D>;
  } catch {
    throw new ApiError(response.status, [{
      status: String(response.status),
      code: 'E_BAD_BODY',
      detail: 'response body was not JSON',
    }]);
  }
  if (!response.ok) {
    throw new ApiError(response.status, parsed.errors ?? []);
  }
  return { status: response.status, document: parsed };
}
