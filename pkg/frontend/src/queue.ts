// Review-queue flow: which proposal is next, verdict submission, and the
// running summary. The server is the source of truth; this class never
// reorders or filters what it serves.

import type {
  Decision,
  ErrorKind,
  ProposalPacket,
  ProposalSummary,
  SummaryResponse,
} from "./api.js";
import { ReviewApi } from "./api.js";

export function firstUnreviewed(proposals: ProposalSummary[]): number | null {
  for (const p of proposals) {
    if (!p.reviewed) return p.rank;
  }
  return null;
}

export function nextUnreviewedAfter(
  proposals: ProposalSummary[],
  rank: number,
): number | null {
  const later = proposals.filter((p) => !p.reviewed && p.rank > rank);
  if (later.length > 0) return later[0].rank;
  return firstUnreviewed(proposals);
}

export const DECISION_KEYS: Record<string, Decision> = {
  a: "annotation_error",
  s: "not_error",
  d: "unsure",
};

export const KIND_KEYS: Record<string, ErrorKind> = {
  "1": "missing_label",
  "2": "wrong_class",
  "3": "misaligned",
  "4": "other",
};

export function formatSummary(summary: SummaryResponse): string {
  const parts: string[] = [];
  for (const [method, entry] of Object.entries(summary.methods)) {
    parts.push(`${method}: ${entry.overall.errors}/${entry.overall.reviewed}`);
  }
  return parts.length ? parts.join("  ") : "nothing reviewed yet";
}

export interface SessionView {
  packet: ProposalPacket | null;
  remaining: number;
  total: number;
  summaryText: string;
  done: boolean;
}

/** Drives one reviewer's pass over the queue against the live service. */
export class ReviewSession {
  private proposals: ProposalSummary[] = [];
  private current: ProposalPacket | null = null;
  private summary: SummaryResponse = { methods: {} };

  constructor(
    private readonly api: ReviewApi,
    private readonly reviewer: string = "default",
  ) {}

  private view(): SessionView {
    const remaining = this.proposals.filter((p) => !p.reviewed).length;
    return {
      packet: this.current,
      remaining,
      total: this.proposals.length,
      summaryText: formatSummary(this.summary),
      done: this.current === null && this.proposals.length > 0,
    };
  }

  /** Fetch the queue and load the first unreviewed proposal. */
  async start(): Promise<SessionView> {
    const listing = await this.api.listProposals();
    this.proposals = listing.proposals;
    this.summary = await this.api.getSummary();
    const rank = firstUnreviewed(this.proposals);
    this.current = rank === null ? null : await this.api.getProposal(rank);
    return this.view();
  }

  /** Record a verdict for the shown proposal and advance. */
  async submit(decision: Decision, kind: ErrorKind = "none"): Promise<SessionView> {
    if (this.current === null) {
      return this.view();
    }
    const submitted = this.current.rank;
    await this.api.submitVerdict({
      method: this.current.method,
      rank: submitted,
      decision,
      kind,
      reviewer: this.reviewer,
    });
    const listing = await this.api.listProposals();
    this.proposals = listing.proposals;
    this.summary = await this.api.getSummary();
    const rank = nextUnreviewedAfter(this.proposals, submitted);
    this.current = rank === null ? null : await this.api.getProposal(rank);
    return this.view();
  }

  /** Jump to a specific rank without recording anything. */
  async open(rank: number): Promise<SessionView> {
    this.current = await this.api.getProposal(rank);
    return this.view();
  }
}
