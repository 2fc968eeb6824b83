export interface CheckInfo {
  is_consistent: boolean;
  degradation_score: number;
  rationale: string;
}

export interface TicketView {
  ticket_id: number;
  t: number;
  v: number;
  status: "pending" | "masked" | "regenerated" | "accepted";
  attempt: number;
  check: CheckInfo;
  recheck: CheckInfo | null;
  mask_png?: string;
}

export interface MaskSubmitResult {
  ticket: TicketView;
  accepted: boolean;
}
