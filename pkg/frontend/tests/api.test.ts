import { afterEach, describe, expect, it, vi } from "vitest";

import { AnnotationClient, NO_MASK_TOKEN, VERSION_HEADER } from "../src/api.js";

function mockFetch(handler: (url: string, init?: RequestInit) => Response) {
  const spy = vi.fn(async (url: RequestInfo | URL, init?: RequestInit) =>
    handler(String(url), init),
  );
  vi.stubGlobal("fetch", spy);
  return spy;
}

afterEach(() => {
  vi.unstubAllGlobals();
});

describe("putMask", () => {
  it("returns the new version on success", async () => {
    mockFetch(() =>
      new Response(JSON.stringify({ version: "abcd1234abcd1234" }), {
        status: 200,
        headers: { [VERSION_HEADER]: "abcd1234abcd1234" },
      }),
    );
    const client = new AnnotationClient();
    const result = await client.putMask("img", new Uint8Array([1]), NO_MASK_TOKEN);
    expect(result).toEqual({ ok: true, version: "abcd1234abcd1234" });
  });

  it("surfaces a conflict with the current remote version", async () => {
    mockFetch(() =>
      new Response(JSON.stringify({ error: "stale version token" }), {
        status: 409,
        headers: { [VERSION_HEADER]: "feedfacefeedface" },
      }),
    );
    const client = new AnnotationClient();
    const result = await client.putMask("img", new Uint8Array([1]), "0000000000000000");
    expect(result).toEqual({ conflict: true, currentVersion: "feedfacefeedface" });
  });

  it("sends the version header it was given", async () => {
    const spy = mockFetch(() =>
      new Response(JSON.stringify({ version: "x" }), { status: 200 }),
    );
    const client = new AnnotationClient();
    await client.putMask("img", new Uint8Array([9]), "sometoken");
    const init = spy.mock.calls[0][1]!;
    expect((init.headers as Record<string, string>)[VERSION_HEADER]).toBe("sometoken");
    expect(init.method).toBe("PUT");
  });

  it("reports validation errors without throwing", async () => {
    mockFetch(() =>
      new Response(JSON.stringify({ error: "mask contains value 9" }), { status: 400 }),
    );
    const client = new AnnotationClient();
    const result = await client.putMask("img", new Uint8Array([1]), NO_MASK_TOKEN);
    expect(result).toEqual({ error: "mask contains value 9" });
  });

  it("reports network failures without losing local state", async () => {
    vi.stubGlobal("fetch", vi.fn(async () => {
      throw new Error("connection refused");
    }));
    const client = new AnnotationClient();
    const result = await client.putMask("img", new Uint8Array([1]), NO_MASK_TOKEN);
    expect(result).toEqual({ error: "connection refused" });
  });
});

describe("fetchMask", () => {
  it("returns null for images without masks", async () => {
    mockFetch(() => new Response(JSON.stringify({ error: "no mask" }), { status: 404 }));
    const client = new AnnotationClient();
    expect(await client.fetchMask("img")).toBeNull();
  });

  it("returns bytes plus the version token", async () => {
    const payload = new Uint8Array([1, 2, 3]);
    mockFetch(() =>
      new Response(payload, { status: 200, headers: { [VERSION_HEADER]: "tok" } }),
    );
    const client = new AnnotationClient();
    const result = await client.fetchMask("img");
    expect(result).not.toBeNull();
    expect([...result!.png]).toEqual([1, 2, 3]);
    expect(result!.version).toBe("tok");
  });
});

describe("listImages / palette", () => {
  it("parses the image listing", async () => {
    mockFetch((url) => {
      expect(url).toBe("/api/v1/images");
      return new Response(
        JSON.stringify([{ id: "a", width: 32, height: 32, has_mask: false }]),
        { status: 200 },
      );
    });
    const client = new AnnotationClient();
    const images = await client.listImages();
    expect(images).toHaveLength(1);
    expect(images[0].id).toBe("a");
  });

  it("throws on a failing palette fetch", async () => {
    mockFetch(() => new Response("oops", { status: 500 }));
    const client = new AnnotationClient();
    await expect(client.getPalette()).rejects.toThrow(/500/);
  });
});
