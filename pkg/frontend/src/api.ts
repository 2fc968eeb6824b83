// Thin typed client for the review service JSON API.

import type { MaskSubmitResult, TicketView } from "./types.js";

export class ApiError extends Error {
  constructor(
    message: string,
    readonly status: number,
  ) {
    super(message);
  }
}

export function frameUrl(base: string, t: number, v: number, variant: "original" | "edited"): string {
  return `${base}/api/frame/${t}/${v}?variant=${variant}`;
}

export async function fetchTickets(base: string): Promise<TicketView[]> {
  const resp = await fetch(`${base}/api/tickets`);
  if (!resp.ok) throw new ApiError(`ticket list failed (${resp.status})`, resp.status);
  const tickets: TicketView[] = await resp.json();
  return sortTickets(tickets);
}

export async function fetchTicket(base: string, id: number): Promise<TicketView> {
  const resp = await fetch(`${base}/api/tickets/${id}`);
  if (!resp.ok) throw new ApiError(`ticket ${id} fetch failed (${resp.status})`, resp.status);
  return resp.json();
}

export async function submitMask(base: string, id: number, maskPngB64: string): Promise<MaskSubmitResult> {
  const resp = await fetch(`${base}/api/tickets/${id}/mask`, {
    method: "POST",
    headers: { "Content-Type": "application/json" },
    body: JSON.stringify({ mask_png: maskPngB64 }),
  });
  const body = await resp.json();
  if (!resp.ok) {
    throw new ApiError(body.error ?? `mask submission failed (${resp.status})`, resp.status);
  }
  return body;
}

/** Pending first, then by (t, v); resolved tickets trail the queue. */
export function sortTickets(tickets: TicketView[]): TicketView[] {
  const rank = { pending: 0, masked: 1, regenerated: 2, accepted: 3 } as const;
  return [...tickets].sort((a, b) => {
    const byStatus = rank[a.status] - rank[b.status];
    if (byStatus !== 0) return byStatus;
    if (a.t !== b.t) return a.t - b.t;
    if (a.v !== b.v) return a.v - b.v;
    return a.ticket_id - b.ticket_id;
  });
}
