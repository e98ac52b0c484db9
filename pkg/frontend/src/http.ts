/** Small fetch wrapper with timeout and exponential-backoff retry. */

export class HttpError extends Error {
  constructor(
    public readonly status: number,
    public readonly body: unknown,
    message?: string,
  ) {
    super(message ?? `HTTP ${status}`);
    this.name = "HttpError";
  }
}

export function isRetryableStatus(status: number): boolean {
  return status >= 500 || status === 429;
}

export function backoffMs(attempt: number): number {
  return 250 * Math.pow(2, attempt);
}

const sleep = (ms: number) => new Promise((r) => setTimeout(r, ms));

export interface RequestOptions {
  retries?: number;
  timeoutMs?: number;
}

export async function httpRequest<T>(
  url: string,
  init: RequestInit,
  { retries = 2, timeoutMs = 30_000 }: RequestOptions = {},
): Promise<T> {
  let lastErr: unknown;
  for (let attempt = 0; attempt <= retries; attempt++) {
    try {
      const res = await fetch(url, { ...init, signal: AbortSignal.timeout(timeoutMs) });
      const text = await res.text();
      let body: unknown = text;
      try {
        body = text.length ? JSON.parse(text) : null;
      } catch {
        // non-JSON body: keep raw text
      }
      if (res.ok) return body as T;
      if (isRetryableStatus(res.status) && attempt < retries) {
        await sleep(backoffMs(attempt));
        continue;
      }
      throw new HttpError(res.status, body, extractMessage(body) ?? `HTTP ${res.status}`);
    } catch (err) {
      if (err instanceof HttpError) throw err;
      lastErr = err; // network error or timeout
      if (attempt < retries) {
        await sleep(backoffMs(attempt));
        continue;
      }
    }
  }
  throw new Error(`request to ${url} failed after ${retries + 1} attempts: ${String(lastErr)}`);
}

function extractMessage(body: unknown): string | undefined {
  if (body && typeof body === "object" && "error" in body) {
    const err = (body as { error?: { message?: string } }).error;
    if (err && typeof err.message === "string") return err.message;
  }
  return undefined;
}
