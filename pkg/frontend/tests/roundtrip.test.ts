import { afterEach, describe, expect, it, vi } from "vitest";

import { ApiClient } from "../src/api.js";
import { UiSession } from "../src/session.js";
import { AnnotationDocument } from "../src/types.js";

/** Stub of the annotation endpoint: stores the posted document and serves
 * it back with the server-added bookkeeping fields, like the real service. */
function stubAnnotationServer() {
  let stored: Record<string, unknown> | null = null;
  let version = 0;
  const fetchMock = vi.fn(async (url: string, init?: RequestInit) => {
    if (url.endsWith("/annotation") && init?.method === "POST") {
      version += 1;
      stored = {
        ...(JSON.parse(init.body as string) as Record<string, unknown>),
        dataset: "fixture",
        version,
        created_at: "2026-01-01T00:00:00Z",
      };
      return new Response(JSON.stringify({ path: "x", version }), { status: 201 });
    }
    if (url.endsWith("/annotation")) {
      return stored
        ? new Response(JSON.stringify(stored), { status: 200 })
        : new Response(JSON.stringify({ error: "none" }), { status: 404 });
    }
    throw new Error(`unexpected request ${url}`);
  });
  vi.stubGlobal("fetch", fetchMock);
  return fetchMock;
}

afterEach(() => vi.unstubAllGlobals());

describe("annotation round trip", () => {
  it("a UI-built document survives submit + re-fetch schema-equal", async () => {
    stubAnnotationServer();
    const session = new UiSession("fixture");
    session.pickSeedColor([0.75, 0.68, 0.25]);
    const landmarks: Array<[number, number, number]> = [
      [-0.08, -0.08, 0],
      [0.08, -0.08, 0],
      [-0.08, 0.08, 0],
      [0.08, 0.08, 0],
      [0, 0, 0.05],
    ];
    for (const lm of landmarks) {
      session.pickCorrespondence("current", lm);
      session.pickCorrespondence("reference", lm);
    }
    session.setCropBox({ min: [-0.1, -0.1, -0.01], max: [0.1, 0.1, 0.09] });
    expect(session.canSubmit()).toBe(true);

    const submitted = session.toDocument();
    const api = new ApiClient();
    await api.saveAnnotation("fixture", submitted);
    const fetched = (await api.getAnnotation("fixture")) as AnnotationDocument;

    // schema-equal modulo the server-added bookkeeping fields
    const strip = (doc: AnnotationDocument) => ({
      correspondences: doc.correspondences,
      crop_box: doc.crop_box,
      seed_colors: doc.seed_colors,
      params: doc.params,
      schema_version: doc.schema_version,
    });
    expect(strip(fetched)).toEqual(strip(submitted));

    // and it hydrates a fresh session losslessly
    const restored = new UiSession("fixture");
    restored.loadDocument(fetched);
    expect(strip(restored.toDocument())).toEqual(strip(submitted));
  });

  it("the gate blocks a submission below four correspondences", async () => {
    const fetchMock = stubAnnotationServer();
    const session = new UiSession("fixture");
    session.pickSeedColor([0.75, 0.68, 0.25]);
    session.pickCorrespondence("current", [0, 0, 0]);
    session.pickCorrespondence("reference", [0, 0, 0]);
    expect(session.canSubmit()).toBe(false);
    // the UI never calls the API while the gate is closed
    expect(fetchMock).not.toHaveBeenCalled();
  });
});
