// Review queue UI: poll tickets, inspect frames, paint and submit masks.

import { ApiError, fetchTicket, fetchTickets, frameUrl, submitMask } from "./api.js";
import { MaskCanvasState } from "./mask.js";
import type { TicketView } from "./types.js";

const POLL_MS = 2000;
const BASE = "";

interface UiState {
  tickets: TicketView[];
  selected: TicketView | null;
  mask: MaskCanvasState | null;
  frameW: number;
  frameH: number;
  overlayOpacity: number;
  busy: boolean;
}

const state: UiState = {
  tickets: [],
  selected: null,
  mask: null,
  frameW: 64,
  frameH: 64,
  overlayOpacity: 0.5,
  busy: false,
};

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function setBanner(message: string | null, kind: "error" | "info" = "error"): void {
  const banner = el<HTMLDivElement>("banner");
  if (!message) {
    banner.style.display = "none";
    return;
  }
  banner.textContent = message;
  banner.className = `banner ${kind}`;
  banner.style.display = "block";
}

function scoreBadge(t: TicketView): string {
  return `<span class="badge s${t.check.degradation_score}">${t.check.degradation_score}</span>`;
}

function renderQueue(): void {
  const list = el<HTMLUListElement>("queue");
  if (state.tickets.length === 0) {
    list.innerHTML = `<li class="empty">no pending corrections</li>`;
    return;
  }
  list.innerHTML = state.tickets
    .map(
      (t) => `
      <li class="ticket ${t.status} ${state.selected?.ticket_id === t.ticket_id ? "selected" : ""}"
          data-id="${t.ticket_id}">
        frame t=${t.t} v=${t.v} ${scoreBadge(t)}
        <span class="status">${t.status}</span>
      </li>`,
    )
    .join("");
  for (const node of Array.from(list.querySelectorAll("li.ticket"))) {
    node.addEventListener("click", () => {
      const id = Number((node as HTMLElement).dataset.id);
      const ticket = state.tickets.find((t) => t.ticket_id === id) ?? null;
      selectTicket(ticket);
    });
  }
}

function drawMaskOverlay(): void {
  if (!state.mask) return;
  const canvas = el<HTMLCanvasElement>("paint");
  const ctx = canvas.getContext("2d")!;
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  const image = ctx.createImageData(state.frameW, state.frameH);
  for (let i = 0; i < state.mask.bitmap.length; i++) {
    if (state.mask.bitmap[i]) {
      image.data[i * 4] = 255;
      image.data[i * 4 + 3] = 110;
    }
  }
  ctx.putImageData(image, 0, 0);
  updateSubmitEnabled();
}

function updateSubmitEnabled(): void {
  const btn = el<HTMLButtonElement>("submit");
  const paintable = state.selected?.status === "pending";
  btn.disabled = state.busy || !paintable || !state.mask || !state.mask.anyPainted();
}

function selectTicket(ticket: TicketView | null): void {
  state.selected = ticket;
  renderQueue();
  const detail = el<HTMLDivElement>("detail");
  if (!ticket) {
    detail.style.display = "none";
    return;
  }
  detail.style.display = "block";
  el<HTMLImageElement>("img-original").src = frameUrl(BASE, ticket.t, ticket.v, "original");
  const edited = el<HTMLImageElement>("img-edited");
  edited.src = `${frameUrl(BASE, ticket.t, ticket.v, "edited")}&bust=${Date.now()}`;
  const overlay = el<HTMLImageElement>("img-overlay");
  overlay.src = frameUrl(BASE, ticket.t, ticket.v, "original");
  overlay.style.opacity = String(state.overlayOpacity);
  el<HTMLPreElement>("rationale").textContent =
    `score ${ticket.check.degradation_score}/10 - ${ticket.check.rationale}` +
    (ticket.recheck ? `\nafter repair: ${ticket.recheck.rationale}` : "");
  state.mask = new MaskCanvasState(state.frameW, state.frameH, brushRadius());
  drawMaskOverlay();
}

function brushRadius(): number {
  return Number(el<HTMLInputElement>("brush").value);
}

function canvasPoint(event: PointerEvent): [number, number] {
  const canvas = el<HTMLCanvasElement>("paint");
  const rect = canvas.getBoundingClientRect();
  const x = ((event.clientX - rect.left) / rect.width) * state.frameW;
  const y = ((event.clientY - rect.top) / rect.height) * state.frameH;
  return [x, y];
}

async function refreshTickets(): Promise<void> {
  try {
    const tickets = await fetchTickets(BASE);
    state.tickets = tickets;
    if (state.selected) {
      const fresh = tickets.find((t) => t.ticket_id === state.selected!.ticket_id);
      if (fresh && fresh.status !== state.selected.status) {
        selectTicket(fresh);
      } else if (fresh) {
        state.selected = fresh;
      }
    }
    renderQueue();
    setBanner(null);
  } catch (err) {
    setBanner(`server unreachable, retrying: ${err instanceof Error ? err.message : err}`);
  }
}

async function onSubmit(): Promise<void> {
  if (!state.selected || !state.mask || !state.mask.anyPainted()) return;
  state.busy = true;
  updateSubmitEnabled();
  try {
    const result = await submitMask(BASE, state.selected.ticket_id, state.mask.toPngBase64());
    setBanner(
      result.accepted
        ? `ticket ${result.ticket.ticket_id} repaired and accepted`
        : `ticket ${result.ticket.ticket_id} regenerated but still inconsistent; a new ticket was filed`,
      "info",
    );
    const fresh = await fetchTicket(BASE, state.selected.ticket_id);
    selectTicket(fresh);
    await refreshTickets();
  } catch (err) {
    if (err instanceof ApiError) {
      setBanner(`submission rejected: ${err.message}`);
    } else {
      setBanner(`submission failed: ${err instanceof Error ? err.message : err}`);
    }
  } finally {
    state.busy = false;
    updateSubmitEnabled();
  }
}

function wirePainting(): void {
  const canvas = el<HTMLCanvasElement>("paint");
  let painting = false;
  let last: [number, number] | null = null;
  canvas.addEventListener("pointerdown", (ev) => {
    if (!state.mask || state.selected?.status !== "pending") return;
    painting = true;
    canvas.setPointerCapture(ev.pointerId);
    state.mask.brushRadius = brushRadius();
    state.mask.beginStroke();
    const [x, y] = canvasPoint(ev);
    state.mask.paintDisk(x, y);
    last = [x, y];
    drawMaskOverlay();
  });
  canvas.addEventListener("pointermove", (ev) => {
    if (!painting || !state.mask || !last) return;
    const [x, y] = canvasPoint(ev);
    state.mask.paintStroke(last[0], last[1], x, y);
    last = [x, y];
    drawMaskOverlay();
  });
  const stop = () => {
    painting = false;
    last = null;
  };
  canvas.addEventListener("pointerup", stop);
  canvas.addEventListener("pointerleave", stop);
}

async function boot(): Promise<void> {
  const probe = new Image();
  probe.onload = () => {
    state.frameW = probe.naturalWidth;
    state.frameH = probe.naturalHeight;
    const canvas = el<HTMLCanvasElement>("paint");
    canvas.width = state.frameW;
    canvas.height = state.frameH;
  };
  probe.src = frameUrl(BASE, 0, 0, "original");

  el<HTMLInputElement>("opacity").addEventListener("input", (ev) => {
    state.overlayOpacity = Number((ev.target as HTMLInputElement).value) / 100;
    el<HTMLImageElement>("img-overlay").style.opacity = String(state.overlayOpacity);
  });
  el<HTMLButtonElement>("undo").addEventListener("click", () => {
    state.mask?.undo();
    drawMaskOverlay();
  });
  el<HTMLButtonElement>("clear").addEventListener("click", () => {
    state.mask?.clear();
    drawMaskOverlay();
  });
  el<HTMLButtonElement>("submit").addEventListener("click", () => void onSubmit());
  wirePainting();

  await refreshTickets();
  setInterval(() => void refreshTickets(), POLL_MS);
}

if (typeof document !== "undefined") {
  document.addEventListener("DOMContentLoaded", () => void boot());
}
