/** Thin fetch client for the segmentation endpoints.
 *
 * The UI never computes masks locally; every pixel it paints comes back
 * through this client.
 */

import type { HealthInfo, SegmentRequestBody, SegmentResponse } from "./types.js";

export class ApiError extends Error {
  constructor(message: string, readonly status: number | null = null) {
    super(message);
    this.name = "ApiError";
  }
}

export class ApiClient {
  constructor(private readonly baseUrl: string = "") {}

  async health(): Promise<HealthInfo> {
    const resp = await fetch(`${this.baseUrl}/api/health`);
    if (!resp.ok) throw new ApiError(`health check failed (${resp.status})`, resp.status);
    return (await resp.json()) as HealthInfo;
  }

  async segment(
    image: Blob,
    body: SegmentRequestBody,
    probabilities = false,
  ): Promise<SegmentResponse> {
    const form = new FormData();
    form.append("image", image, "image.png");
    form.append("request", JSON.stringify(body));
    const query = probabilities ? "?probabilities=true" : "";
    let resp: Response;
    try {
      resp = await fetch(`${this.baseUrl}/api/segment${query}`, {
        method: "POST",
        body: form,
      });
    } catch (err) {
      throw new ApiError(`segmentation request failed: ${String(err)}`);
    }
    if (!resp.ok) {
      let detail = `HTTP ${resp.status}`;
      try {
        const payload = (await resp.json()) as { detail?: unknown };
        if (payload.detail !== undefined) detail = `${detail}: ${JSON.stringify(payload.detail)}`;
      } catch {
        // non-JSON error body; the status alone will have to do
      }
      throw new ApiError(detail, resp.status);
    }
    return (await resp.json()) as SegmentResponse;
  }
}
