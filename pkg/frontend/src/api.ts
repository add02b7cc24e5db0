/** Thin REST client for the annotation service. */

import { decodeFrame, DecodedFrame } from "./frame.js";
import { AnnotationDocument, DatasetInfo, PreviewResult } from "./types.js";

export class ApiError extends Error {
  constructor(
    public status: number,
    message: string,
  ) {
    super(message);
  }
}

async function errorMessage(response: Response): Promise<string> {
  try {
    const body = await response.json();
    if (typeof body.error === "string") return body.error;
    return JSON.stringify(body.detail ?? body);
  } catch {
    return response.statusText;
  }
}

export class ApiClient {
  constructor(private baseUrl: string = "") {}

  private url(path: string): string {
    return `${this.baseUrl}${path}`;
  }

  async listDatasets(): Promise<DatasetInfo[]> {
    const response = await fetch(this.url("/datasets"));
    if (!response.ok) throw new ApiError(response.status, await errorMessage(response));
    return response.json();
  }

  async fetchFrame(dataset: string, frame: number, maxPoints?: number): Promise<DecodedFrame> {
    const query = maxPoints ? `?max_points=${maxPoints}` : "";
    const response = await fetch(this.url(`/datasets/${dataset}/frames/${frame}${query}`));
    if (!response.ok) throw new ApiError(response.status, await errorMessage(response));
    return decodeFrame(await response.arrayBuffer());
  }

  async getAnnotation(dataset: string): Promise<AnnotationDocument | null> {
    const response = await fetch(this.url(`/datasets/${dataset}/annotation`));
    if (response.status === 404) return null;
    if (!response.ok) throw new ApiError(response.status, await errorMessage(response));
    return response.json();
  }

  async saveAnnotation(dataset: string, doc: AnnotationDocument): Promise<{ version: number }> {
    const response = await fetch(this.url(`/datasets/${dataset}/annotation`), {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(doc),
    });
    if (!response.ok) throw new ApiError(response.status, await errorMessage(response));
    return response.json();
  }

  async preview(dataset: string, doc: AnnotationDocument): Promise<PreviewResult> {
    const response = await fetch(this.url(`/datasets/${dataset}/preview`), {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(doc),
    });
    if (!response.ok) throw new ApiError(response.status, await errorMessage(response));
    return response.json();
  }
}
