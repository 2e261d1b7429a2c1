// Thin typed client over the review service's HTTP/JSON contract.

import type { DecisionAck, DecisionBody, FrameDetail, FramesPage }
  from "./types.js";

export class ApiError extends Error {
  constructor(readonly status: number, detail: string) {
    super(detail);
  }
}

async function asJson<T>(response: Response): Promise<T> {
  if (!response.ok) {
    let detail = response.statusText;
    try {
      detail = JSON.stringify((await response.json()).detail);
    } catch {
      // keep the status text
    }
    throw new ApiError(response.status, detail);
  }
  return response.json() as Promise<T>;
}

export class ReviewApi {
  constructor(private base = "") {}

  async frames(state = "all", page = 0): Promise<FramesPage> {
    const url = `${this.base}/frames?state=${state}&page=${page}`;
    return asJson<FramesPage>(await fetch(url));
  }

  async frame(imageId: string): Promise<FrameDetail> {
    return asJson<FrameDetail>(
      await fetch(`${this.base}/frames/${encodeURIComponent(imageId)}`));
  }

  imageUrl(imageId: string): string {
    return `${this.base}/frames/${encodeURIComponent(imageId)}/image`;
  }

  async postDecision(body: DecisionBody): Promise<DecisionAck> {
    return asJson<DecisionAck>(await fetch(`${this.base}/decisions`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    }));
  }
}
