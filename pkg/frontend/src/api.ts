import type { PredictRequest, PredictResponse, SessionResponse } from "./types.js";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

/** Thin client over the inference service HTTP API. The fetch implementation
 * is injectable so tests can run against recorded responses. */
export class ServiceClient {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchImpl: FetchLike = fetch,
  ) {}

  async createSession(image: Blob, adapters: "keep" | "remove" = "keep"): Promise<SessionResponse> {
    const form = new FormData();
    form.append("image", image, "image.png");
    form.append("adapters", adapters);
    const resp = await this.fetchImpl(`${this.baseUrl}/sessions`, {
      method: "POST",
      body: form,
    });
    return this.unwrap(resp);
  }

  async predict(sessionId: string, request: PredictRequest): Promise<PredictResponse> {
    const resp = await this.fetchImpl(`${this.baseUrl}/sessions/${sessionId}/predict`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(request),
    });
    return this.unwrap(resp);
  }

  async reset(sessionId: string): Promise<void> {
    await this.unwrap(
      await this.fetchImpl(`${this.baseUrl}/sessions/${sessionId}/reset`, { method: "POST" }),
    );
  }

  async close(sessionId: string): Promise<void> {
    await this.unwrap(
      await this.fetchImpl(`${this.baseUrl}/sessions/${sessionId}`, { method: "DELETE" }),
    );
  }

  private async unwrap<T>(resp: Response): Promise<T> {
    if (!resp.ok) {
      const detail = await resp.text().catch(() => "");
      throw new Error(`service error ${resp.status}: ${detail}`);
    }
    return (await resp.json()) as T;
  }
}
