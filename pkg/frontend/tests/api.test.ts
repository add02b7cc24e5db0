import { afterEach, describe, expect, it, vi } from "vitest";

import { ApiClient, ApiError } from "../src/api.js";
import { HEADER_BYTES } from "../src/frame.js";
import { AnnotationDocument, DEFAULT_PARAMS } from "../src/types.js";

const DOC: AnnotationDocument = {
  schema_version: 1,
  correspondences: [
    { source: [0, 0, 0], reference: [0, 0, 0] },
    { source: [1, 0, 0], reference: [1, 0, 0] },
    { source: [0, 1, 0], reference: [0, 1, 0] },
    { source: [0, 0, 1], reference: [0, 0, 1] },
  ],
  crop_box: { min: [-1, -1, -1], max: [1, 1, 1] },
  seed_colors: [[0.5, 0.5, 0.5]],
  params: DEFAULT_PARAMS,
};

function jsonResponse(body: unknown, status = 200): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "content-type": "application/json" },
  });
}

afterEach(() => {
  vi.unstubAllGlobals();
});

describe("ApiClient", () => {
  it("lists datasets from the expected path", async () => {
    const fetchMock = vi.fn().mockResolvedValue(jsonResponse([{ id: "a" }]));
    vi.stubGlobal("fetch", fetchMock);
    const datasets = await new ApiClient("http://svc").listDatasets();
    expect(fetchMock).toHaveBeenCalledWith("http://svc/datasets");
    expect(datasets[0].id).toBe("a");
  });

  it("builds the frame query with decimation", async () => {
    const buffer = new ArrayBuffer(HEADER_BYTES);
    const view = new DataView(buffer);
    [0x43, 0x53, 0x46, 0x52].forEach((b, i) => view.setUint8(i, b));
    view.setUint32(4, 1, true);
    view.setBigUint64(8, 0n, true);
    const fetchMock = vi.fn().mockResolvedValue(new Response(buffer));
    vi.stubGlobal("fetch", fetchMock);
    const frame = await new ApiClient().fetchFrame("ds", 2, 1000);
    expect(fetchMock).toHaveBeenCalledWith("/datasets/ds/frames/2?max_points=1000");
    expect(frame.count).toBe(0);
  });

  it("returns null for a missing annotation", async () => {
    vi.stubGlobal("fetch", vi.fn().mockResolvedValue(jsonResponse({ error: "none" }, 404)));
    expect(await new ApiClient().getAnnotation("ds")).toBeNull();
  });

  it("posts annotations as JSON", async () => {
    const fetchMock = vi.fn().mockResolvedValue(jsonResponse({ version: 2 }, 201));
    vi.stubGlobal("fetch", fetchMock);
    const saved = await new ApiClient().saveAnnotation("ds", DOC);
    expect(saved.version).toBe(2);
    const [url, init] = fetchMock.mock.calls[0];
    expect(url).toBe("/datasets/ds/annotation");
    expect(init.method).toBe("POST");
    expect(JSON.parse(init.body).correspondences).toHaveLength(4);
  });

  it("surfaces 409 previews as ApiError with the server message", async () => {
    vi.stubGlobal("fetch",
      vi.fn().mockResolvedValue(jsonResponse({ error: "no matching cluster: ..." }, 409)));
    const err = await new ApiClient().preview("ds", DOC).catch((e) => e);
    expect(err).toBeInstanceOf(ApiError);
    expect(err.status).toBe(409);
    expect(err.message).toMatch(/no matching cluster/);
  });

  it("surfaces 422 validation detail", async () => {
    vi.stubGlobal("fetch", vi.fn().mockResolvedValue(
      jsonResponse({ detail: [{ msg: "at least four point correspondences are required" }] }, 422)));
    const err = await new ApiClient().saveAnnotation("ds", DOC).catch((e) => e);
    expect(err.status).toBe(422);
    expect(err.message).toMatch(/at least four point correspondences/);
  });
});
