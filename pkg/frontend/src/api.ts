// Typed client for the review service's /v1 endpoints.

export interface ProposalSummary {
  rank: number;
  method: string;
  frame_id: string;
  box_id: number;
  key: number;
  iou: number;
  cls: number;
  class_name: string;
  reviewed: boolean;
}

export interface ProposalListing {
  count: number;
  proposals: ProposalSummary[];
}

export interface BoxGeometry {
  cx: number;
  cy: number;
  cz: number;
  l: number;
  w: number;
  h: number;
  yaw: number;
}

export interface GroundTruthBox extends BoxGeometry {
  ann_id: number;
  cls: number;
  class_name: string;
}

export interface ProposalPacket {
  rank: number;
  method: string;
  frame_id: string;
  box_id: number;
  key: number;
  iou: number;
  cls: number;
  class_name: string;
  box: BoxGeometry;
  crop_center: [number, number];
  crop_radius: number;
  points: number[][];
  ground_truth: GroundTruthBox[];
  camera_image: string | null;
}

export type Decision = "annotation_error" | "not_error" | "unsure";
export type ErrorKind = "missing_label" | "wrong_class" | "misaligned" | "other" | "none";

export interface VerdictRequest {
  method: string;
  rank: number;
  decision: Decision;
  kind: ErrorKind;
  reviewer: string;
}

export interface Counts {
  errors: number;
  reviewed: number;
}

export interface MethodSummary {
  overall: Counts;
  per_class: Record<string, Counts>;
}

export interface SummaryResponse {
  methods: Record<string, MethodSummary>;
}

export class ApiError extends Error {
  constructor(readonly status: number, message: string) {
    super(message);
    this.name = "ApiError";
  }
}

async function requestJson<T>(url: string, init?: RequestInit): Promise<T> {
  const resp = await fetch(url, init);
  if (!resp.ok) {
    let detail = resp.statusText;
    try {
      const body = (await resp.json()) as { error?: string };
      if (body.error) detail = body.error;
    } catch {
      // keep the status text
    }
    throw new ApiError(resp.status, detail);
  }
  return (await resp.json()) as T;
}

export class ReviewApi {
  constructor(private readonly baseUrl: string = "") {}

  listProposals(): Promise<ProposalListing> {
    return requestJson<ProposalListing>(`${this.baseUrl}/v1/proposals`);
  }

  getProposal(rank: number): Promise<ProposalPacket> {
    return requestJson<ProposalPacket>(`${this.baseUrl}/v1/proposals/${rank}`);
  }

  submitVerdict(verdict: VerdictRequest): Promise<{ ok: boolean }> {
    return requestJson<{ ok: boolean }>(`${this.baseUrl}/v1/verdicts`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(verdict),
    });
  }

  getSummary(): Promise<SummaryResponse> {
    return requestJson<SummaryResponse>(`${this.baseUrl}/v1/summary`);
  }
}
