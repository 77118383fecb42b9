/**
 * Typed client for the bevcal calibration service.
 *
 * The UI never computes calibration geometry itself: every number it
 * displays comes out of these endpoints. The fetch implementation is
 * injectable so tests can replay recorded server responses.
 */

export interface PairDto {
  map_px: [number, number];
  image_px: [number, number];
  label?: string;
}

export interface HomographyDto {
  src: string;
  dst: string;
  m: number[][];
}

export interface CalibrationOk {
  status: "ok";
  revision: number;
  H_world_ori: HomographyDto;
  residuals_px: number[];
  rms: number;
  max: number;
}

export interface CalibrationPending {
  status: "insufficient_points" | "degenerate";
  revision: number;
  n_pairs?: number;
  message?: string;
}

export type CalibrationResponse = CalibrationOk | CalibrationPending;

export interface CameraOk {
  status: "ok";
  revision: number;
  f: number;
  px: number;
  py: number;
  R: number[][];
  t: number[];
}

export interface CameraFailed {
  status: string;
  revision: number;
  message?: string;
}

export type CameraResponse = CameraOk | CameraFailed;

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    public readonly body: unknown,
  ) {
    super(`service responded ${status}`);
  }
}

async function expectJson<T>(resp: Response): Promise<T> {
  if (!resp.ok) {
    let body: unknown = null;
    try {
      body = await resp.json();
    } catch {
      /* non-JSON error body */
    }
    throw new ApiError(resp.status, body);
  }
  return (await resp.json()) as T;
}

export class CalibrationApi {
  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchImpl: FetchLike = (input, init) => fetch(input, init),
  ) {}

  async createSession(name: string): Promise<{ id: string; revision: number }> {
    const resp = await this.fetchImpl(`${this.baseUrl}/api/sessions`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ name }),
    });
    return expectJson(resp);
  }

  async putImages(
    sessionId: string,
    camera: Blob,
    map: Blob,
    mapScale: number,
    mapOrigin: [number, number],
  ): Promise<void> {
    const form = new FormData();
    form.append("camera", camera, "camera.png");
    form.append("map", map, "map.png");
    form.append("map_scale", String(mapScale));
    form.append("map_origin_x", String(mapOrigin[0]));
    form.append("map_origin_y", String(mapOrigin[1]));
    const resp = await this.fetchImpl(`${this.baseUrl}/api/sessions/${sessionId}/images`, {
      method: "PUT",
      body: form,
    });
    if (!resp.ok) {
      throw new ApiError(resp.status, await resp.json().catch(() => null));
    }
  }

  async putCorrespondences(sessionId: string, pairs: PairDto[]): Promise<{ revision: number }> {
    const resp = await this.fetchImpl(
      `${this.baseUrl}/api/sessions/${sessionId}/correspondences`,
      {
        method: "PUT",
        headers: { "content-type": "application/json" },
        body: JSON.stringify({ pairs }),
      },
    );
    return expectJson(resp);
  }

  async getCalibration(sessionId: string): Promise<CalibrationResponse> {
    const resp = await this.fetchImpl(`${this.baseUrl}/api/sessions/${sessionId}/calibration`);
    return expectJson(resp);
  }

  async getCamera(sessionId: string, px: number, py: number): Promise<CameraResponse> {
    const resp = await this.fetchImpl(
      `${this.baseUrl}/api/sessions/${sessionId}/camera?px=${px}&py=${py}`,
    );
    return expectJson(resp);
  }

  /** Preview URL; the revision parameter defeats stale caching. */
  bevPreviewUrl(
    sessionId: string,
    ppm: number,
    w: number,
    h: number,
    origin: [number, number],
    revision: number,
  ): string {
    const params = new URLSearchParams({
      ppm: String(ppm),
      w: String(w),
      h: String(h),
      ox: String(origin[0]),
      oy: String(origin[1]),
      rev: String(revision),
    });
    return `${this.baseUrl}/api/sessions/${sessionId}/bev-preview?${params}`;
  }
}
