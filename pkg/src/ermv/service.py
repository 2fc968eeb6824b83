"""Review HTTP service: ticket queue, frame access, mask submission."""

from __future__ import annotations

import base64
import dataclasses
import io
import socket
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from fastapi import FastAPI
from fastapi.responses import HTMLResponse, JSONResponse, Response
from PIL import Image

from .config import RunConfig
from .denoise import AnchorSpec, sample_sequence, torch_image
from .editor import checker_from_config
from .feedback import CheckResult, TicketStore, resolve_ticket
from .pipeline import load_model_checkpoint, schedule_from_config
from .synthdata import load_dataset, write_image
from .synthdata.io import frame_name
from .util import derive_seed
from .windows import Memory, PlanEntry, SamplePlan


class PortInUse(OSError):
    pass


FALLBACK_PAGE = """<!doctype html>
<html><head><title>review service</title></head>
<body><h1>Review service is running</h1>
<p>No UI bundle found. Build the frontend (see frontend/README.md) or use the
JSON API under <code>/api/tickets</code>.</p></body></html>
"""


@dataclass
class ReviewContext:
    """Everything the HTTP handlers need, with injectable behavior for tests."""

    store: TicketStore
    frame_shape: tuple  # (H, W)
    originals: object  # callable (t, v) -> float image
    edited: object  # callable (t, v) -> float image
    checker: object  # callable (orig, edited, t, v) -> CheckResult
    regenerate: object  # callable (t, v, mask) -> float image
    on_accept: object = None  # callable (t, v, image) after successful repair
    ui_dist: Path | None = None


def decode_mask_png(b64: str) -> np.ndarray:
    raw = base64.b64decode(b64)
    img = Image.open(io.BytesIO(raw)).convert("L")
    return (np.asarray(img) > 127).astype(np.uint8)


def image_png_bytes(img: np.ndarray) -> bytes:
    from .synthdata.io import linear_to_srgb

    data = np.round(linear_to_srgb(np.asarray(img, dtype=np.float64)) * 255).astype(np.uint8)
    buf = io.BytesIO()
    Image.fromarray(data, mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def build_app(ctx: ReviewContext) -> FastAPI:
    app = FastAPI(title="review-service")

    @app.get("/api/tickets")
    def list_tickets():
        return [t.as_dict() for t in ctx.store.all()]

    @app.get("/api/tickets/{ticket_id}")
    def ticket_detail(ticket_id: int):
        try:
            ticket = ctx.store.get(ticket_id)
        except KeyError:
            return JSONResponse({"error": f"no ticket {ticket_id}"}, status_code=404)
        detail = ticket.as_dict()
        if ticket.mask is not None:
            buf = io.BytesIO()
            Image.fromarray((ticket.mask * 255).astype(np.uint8), mode="L").save(buf, format="PNG")
            detail["mask_png"] = base64.b64encode(buf.getvalue()).decode("ascii")
        return detail

    @app.get("/api/frame/{t}/{v}")
    def frame(t: int, v: int, variant: str = "original"):
        source = ctx.originals if variant == "original" else ctx.edited
        try:
            img = source(t, v)
        except (KeyError, FileNotFoundError, IndexError):
            img = None
        if img is None:
            return JSONResponse({"error": f"no frame t={t} v={v}"}, status_code=404)
        return Response(content=image_png_bytes(img), media_type="image/png")

    @app.post("/api/tickets/{ticket_id}/mask")
    def submit_mask(ticket_id: int, body: dict):
        try:
            ticket = ctx.store.get(ticket_id)
        except KeyError:
            return JSONResponse({"error": f"no ticket {ticket_id}"}, status_code=404)
        if ticket.status != "pending":
            return JSONResponse(
                {"error": f"ticket {ticket_id} is {ticket.status}, not pending"}, status_code=409
            )
        if "mask_png" not in body:
            return JSONResponse({"error": "body must carry mask_png"}, status_code=422)
        try:
            mask = decode_mask_png(body["mask_png"])
        except Exception:
            return JSONResponse({"error": "mask_png is not a decodable PNG"}, status_code=422)
        if mask.shape != tuple(ctx.frame_shape):
            return JSONResponse(
                {
                    "error": (
                        f"mask dimensions {mask.shape[1]}x{mask.shape[0]} do not match "
                        f"frame {ctx.frame_shape[1]}x{ctx.frame_shape[0]}"
                    )
                },
                status_code=422,
            )
        if not mask.any():
            return JSONResponse({"error": "mask has no painted pixels"}, status_code=422)
        corrected = resolve_ticket(
            ticket_id, mask, ctx.originals, ctx.checker, ctx.store, ctx.regenerate
        )
        if corrected is not None and ctx.on_accept is not None:
            ctx.on_accept(ticket.t, ticket.v, corrected)
        return {"ticket": ctx.store.get(ticket_id).as_dict(), "accepted": corrected is not None}

    @app.get("/", response_class=HTMLResponse)
    def index():
        if ctx.ui_dist is not None:
            page = ctx.ui_dist / "index.html"
            if page.exists():
                return page.read_text()
        return FALLBACK_PAGE

    @app.get("/assets/{name}")
    def asset(name: str):
        if ctx.ui_dist is None:
            return JSONResponse({"error": "no ui bundle"}, status_code=404)
        path = ctx.ui_dist / "assets" / name
        if not path.exists() or not path.resolve().is_relative_to(ctx.ui_dist.resolve()):
            return JSONResponse({"error": "not found"}, status_code=404)
        media = "text/javascript" if name.endswith(".js") else "text/css" if name.endswith(".css") else "application/octet-stream"
        return Response(content=path.read_bytes(), media_type=media)

    return app


def default_ui_dist() -> Path | None:
    candidate = Path(__file__).resolve().parents[2] / "frontend" / "dist"
    return candidate if candidate.exists() else None


def context_from_run(cfg: RunConfig, checkpoint: str | None = None) -> ReviewContext:
    """Build the live review context backed by the trained model."""
    out_dir = Path(cfg.out_dir)
    store = TicketStore(path=out_dir / "tickets.json")
    if (out_dir / "tickets.json").exists():
        _hydrate_store(store, out_dir / "tickets.json")

    base = Path(cfg.dataset_root) / cfg.edit.trajectory
    states, gt_masks, _ = load_dataset(base / "original")
    edited_dir = out_dir / "edited_output"
    edited, _, _ = load_dataset(edited_dir)

    ckpt = Path(checkpoint) if checkpoint else out_dir / cfg.train.checkpoint_name
    model, _, _ = load_model_checkpoint(ckpt)
    model.eval()
    sched = schedule_from_config(cfg)
    window = dataclasses.replace(cfg.window, N=states.N)
    from .editor import _resolve_guidance

    guidance = _resolve_guidance(cfg, base)

    base_seed = derive_seed("edit", cfg.seed, cfg.edit.seed)

    def regenerate(t, v, mask, attempt=0):
        # history memory rehydrated from the written output frames of the
        # ticket's window; the seed depends only on (run seed, frame,
        # attempt) so HTTP and file-based mask paths repair identically
        memory = Memory(L_hist=window.L_hist)
        lo = max(0, t - window.L_hist)
        frames = [
            (ht, hv, edited.images[ht, hv])
            for ht in range(lo, t)
            for hv in range(states.N)
        ]
        memory.advance(frames[-window.K_hist * 4 :], current_t=t)
        hist_keys = memory.keys()[-window.K_hist :]
        entries = [PlanEntry(ht, hv, "history") for ht, hv in hist_keys]
        entries.append(PlanEntry(t, v, "future"))
        plan = SamplePlan(entries=tuple(entries), seed=0)
        dtype = next(model.parameters()).dtype
        anchor = AnchorSpec(
            image=torch_image(states.images[t, v], dtype, "cpu"),
            mask=torch.as_tensor(np.asarray(mask), dtype=dtype)[None],
        )
        result = sample_sequence(
            model,
            states,
            plan,
            guidance,
            memory,
            sched,
            seed=derive_seed("regen", base_seed, t, v, attempt),
            correction_anchors={(t, v): anchor},
        )
        return result[(t, v)]

    def on_accept(t, v, image):
        edited.images[t, v] = image
        write_image(edited_dir / "frames" / frame_name(t, v), image)

    return ReviewContext(
        store=store,
        frame_shape=(states.images.shape[2], states.images.shape[3]),
        originals=lambda t, v: states.images[t, v],
        edited=lambda t, v: edited.images[t, v],
        checker=checker_from_config(cfg, gt_masks),
        regenerate=regenerate,
        on_accept=on_accept,
        ui_dist=default_ui_dist(),
    )


def _hydrate_store(store: TicketStore, path: Path) -> None:
    import json

    for item in json.loads(path.read_text()):
        check = CheckResult(**item["check"])
        ticket = store.new_ticket(item["t"], item["v"], check, attempt=item.get("attempt", 0))
        # only pending tickets stay actionable after a restart; completed
        # states are re-recorded for the queue view
        if item["status"] != "pending":
            ticket.status = item["status"]
            if item.get("recheck"):
                ticket.recheck = CheckResult(**item["recheck"])


def serve_review(cfg: RunConfig, port: int | None = None, checkpoint: str | None = None):
    """Run the review service; raises PortInUse when the port is taken."""
    import uvicorn

    host = cfg.serve.host
    port = port if port is not None else cfg.serve.port
    probe = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    try:
        probe.bind((host, port))
    except OSError as exc:
        raise PortInUse(f"{host}:{port} is already bound: {exc}") from exc
    finally:
        probe.close()
    ctx = context_from_run(cfg, checkpoint)
    app = build_app(ctx)
    uvicorn.run(app, host=host, port=port, log_level="warning")
