/**
 * Typed client for the annotation service API (/api/v1).
 *
 * Saving uses optimistic versioning: every PUT carries the version token
 * of the mask state it was based on; the service answers 409 when the
 * remote side moved on, and the caller surfaces a merge prompt instead of
 * overwriting.
 */

export const API_PREFIX = "/api/v1";
export const VERSION_HEADER = "X-Mask-Version";
export const NO_MASK_TOKEN = "new";

export interface ImageInfo {
  id: string;
  width: number;
  height: number;
  has_mask: boolean;
}

export interface PaletteEntry {
  index: number;
  name: string;
  color: [number, number, number];
}

export type SaveResult =
  | { ok: true; version: string }
  | { conflict: true; currentVersion: string }
  | { error: string };

export class AnnotationClient {
  constructor(private base: string = "") {}

  private url(path: string): string {
    return `${this.base}${API_PREFIX}${path}`;
  }

  imageUrl(id: string): string {
    return this.url(`/images/${encodeURIComponent(id)}/image`);
  }

  async listImages(): Promise<ImageInfo[]> {
    const resp = await fetch(this.url("/images"));
    if (!resp.ok) throw new Error(`listing images failed: ${resp.status}`);
    return (await resp.json()) as ImageInfo[];
  }

  async getPalette(): Promise<PaletteEntry[]> {
    const resp = await fetch(this.url("/palette"));
    if (!resp.ok) throw new Error(`palette fetch failed: ${resp.status}`);
    return (await resp.json()) as PaletteEntry[];
  }

  async getProgress(): Promise<Record<string, number>> {
    const resp = await fetch(this.url("/progress"));
    if (!resp.ok) throw new Error(`progress fetch failed: ${resp.status}`);
    return (await resp.json()) as Record<string, number>;
  }

  /** Returns null (with the "new" token) when the image has no mask yet. */
  async fetchMask(id: string): Promise<{ png: Uint8Array; version: string } | null> {
    const resp = await fetch(this.url(`/images/${encodeURIComponent(id)}/mask`));
    if (resp.status === 404) return null;
    if (!resp.ok) throw new Error(`mask fetch failed: ${resp.status}`);
    const version = resp.headers.get(VERSION_HEADER) ?? NO_MASK_TOKEN;
    const png = new Uint8Array(await resp.arrayBuffer());
    return { png, version };
  }

  async putMask(id: string, png: Uint8Array, version: string): Promise<SaveResult> {
    let resp: Response;
    try {
      // slice() pins the view to an exact ArrayBuffer, a valid body type
      resp = await fetch(this.url(`/images/${encodeURIComponent(id)}/mask`), {
        method: "PUT",
        headers: { [VERSION_HEADER]: version, "Content-Type": "image/png" },
        body: png.slice().buffer,
      });
    } catch (err) {
      return { error: err instanceof Error ? err.message : "network failure" };
    }
    if (resp.status === 409) {
      const current =
        resp.headers.get(VERSION_HEADER) ??
        ((await resp.json()) as { version?: string }).version ??
        NO_MASK_TOKEN;
      return { conflict: true, currentVersion: current };
    }
    if (!resp.ok) {
      let message = `save failed: ${resp.status}`;
      try {
        const body = (await resp.json()) as { error?: string };
        if (body.error) message = body.error;
      } catch {
        // non-JSON error body; keep the status message
      }
      return { error: message };
    }
    const body = (await resp.json()) as { version: string };
    return { ok: true, version: body.version };
  }
}
