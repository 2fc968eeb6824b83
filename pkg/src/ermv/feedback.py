"""Consistency checking of core objects plus the correction-ticket workflow.

Two interchangeable checkers drive the same loop: a programmatic oracle that
scores masked-region SSIM against the source frame, and a client for an
external multimodal model speaking a small JSON-over-HTTP protocol. Frames
that fail the check become correction tickets; a mask supplied later (by the
review UI, a file, or ground truth in tests) triggers one mask-conditioned
regeneration and a single re-check.
"""

from __future__ import annotations

import base64
import io
import json
import re
import threading
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import requests
from PIL import Image

from .metrics import ssim_map
from .synthdata.scene import EmptyMask
from .synthdata.io import linear_to_srgb

SCORE_MAX = 10
CONSISTENT_MAX_SCORE = 5  # scores above this flag serious degradation

DEFAULT_PROMPT_TEMPLATE = """\
You will see two images: the left/original frame and the right/edited frame.
Only the <objects> matter here; ignore every other part of the scene.
Rate how much the <objects> degraded between the two images on a 0-10 scale.
Step 1: Locate the <objects> in both images, ignoring the background.
Step 2: If the <objects> are missing from the edited image, the score is 10.
Step 3: Otherwise compare their shape, color, and position, and pick a
degradation score from 0 (identical) to 10 (destroyed).
Step 4: If the score is more than 5, reply with {"is consistent":False}
in JSON format; otherwise reply with {"is consistent":True}.
Include the numeric score in your reply as {"score": <number>} if possible.
"""


class EndpointUnreachable(ConnectionError):
    pass


class UnparseableReply(ValueError):
    def __init__(self, message: str, reply: str):
        super().__init__(message)
        self.reply = reply


@dataclass
class CheckResult:
    is_consistent: bool
    degradation_score: int
    rationale: str

    def __post_init__(self):
        if not (0 <= self.degradation_score <= SCORE_MAX):
            raise ValueError(f"score {self.degradation_score} outside [0, {SCORE_MAX}]")
        if self.is_consistent != (self.degradation_score <= CONSISTENT_MAX_SCORE):
            raise ValueError("is_consistent must equal (score <= 5)")

    def as_dict(self) -> dict:
        return {
            "is_consistent": self.is_consistent,
            "degradation_score": self.degradation_score,
            "rationale": self.rationale,
        }


@dataclass(frozen=True)
class CheckerConfig:
    mode: str = "oracle"  # "oracle" | "external"
    endpoint: str = ""
    prompt_template: str = DEFAULT_PROMPT_TEMPLATE
    oracle_ssim_threshold: float = 0.80
    retries: int = 2
    timeout_s: float = 20.0

    def __post_init__(self):
        if self.mode not in ("oracle", "external"):
            raise ValueError(f"unknown checker mode {self.mode!r}")
        if not (0.0 < self.oracle_ssim_threshold < 1.0):
            raise ValueError("oracle_ssim_threshold must be in (0, 1)")
        if self.retries < 0:
            raise ValueError("retries must be >= 0")


def score_from_ssim(value: float, threshold: float) -> int:
    """Map masked SSIM to the 0-10 degradation scale.

    Calibrated so SSIM at the threshold sits exactly on the consistency
    boundary (score 5); a threshold of 0.5 reduces to round(10 * (1 - SSIM)).
    """
    degradation = (1.0 - float(np.clip(value, 0.0, 1.0))) / (2.0 * (1.0 - threshold))
    return int(round(SCORE_MAX * float(np.clip(degradation, 0.0, 1.0))))


def mask_bounding_slices(mask: np.ndarray, min_size: int = 11) -> tuple[slice, slice]:
    """Bounding box of the mask, padded to at least min_size per axis."""
    ys, xs = np.nonzero(mask)
    if len(ys) == 0:
        raise EmptyMask("consistency check needs a nonempty mask")
    h, w = mask.shape

    def padded(lo, hi, limit):
        size = hi - lo + 1
        if size < min_size:
            grow = min_size - size
            lo = max(0, lo - grow // 2 - grow % 2)
            hi = min(limit - 1, max(hi + grow // 2, lo + min_size - 1))
            lo = min(lo, max(0, hi - min_size + 1))
        return slice(lo, hi + 1)

    return padded(ys.min(), ys.max(), h), padded(xs.min(), xs.max(), w)


def oracle_check(original, edited, gt_mask, threshold: float = 0.80) -> CheckResult:
    """Programmatic consistency verdict from masked-region SSIM.

    Only the masked (core-object) pixels are judged: the edited image is
    composited over the original outside the mask, SSIM is computed over the
    mask's (padded) bounding region, and the local scores are averaged over
    windows centered on masked pixels. This keeps legitimate background
    edits next to the object invisible to the checker and keeps small masks
    from being diluted by their surroundings.
    """
    original = np.asarray(original, dtype=np.float64)
    edited = np.asarray(edited, dtype=np.float64)
    mask = np.asarray(gt_mask).astype(bool)
    rows, cols = mask_bounding_slices(mask)
    neutral = np.where(mask[..., None], edited, original)
    local = ssim_map(original[rows, cols], neutral[rows, cols])
    half = 5  # valid-window offset for the 11x11 window
    centers = mask[rows, cols][half : half + local.shape[0], half : half + local.shape[1]]
    value = float(local[centers].mean()) if centers.any() else float(local.mean())
    score = score_from_ssim(value, threshold)
    consistent = score <= CONSISTENT_MAX_SCORE
    rationale = (
        f"masked-region ssim={value:.4f} over rows {rows.start}:{rows.stop} "
        f"cols {cols.start}:{cols.stop}; score {score}/10"
    )
    return CheckResult(is_consistent=consistent, degradation_score=score, rationale=rationale)


def image_to_png_b64(image: np.ndarray) -> str:
    data = np.round(linear_to_srgb(np.asarray(image, dtype=np.float64)) * 255).astype(np.uint8)
    buf = io.BytesIO()
    Image.fromarray(data, mode="RGB").save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


_JSON_OBJECT = re.compile(r"\{[^{}]*\}")


def parse_checker_reply(reply: str) -> tuple[bool, int | None]:
    """Extract the consistency verdict (and optional score) from model text.

    Reads the last JSON-looking object in the reply; tolerates Python-style
    True/False capitalization and whitespace around the key.
    """
    candidates = _JSON_OBJECT.findall(reply)
    verdict = None
    score = None
    for blob in candidates:
        normalized = re.sub(r"\bTrue\b", "true", blob)
        normalized = re.sub(r"\bFalse\b", "false", normalized)
        try:
            obj = json.loads(normalized)
        except json.JSONDecodeError:
            continue
        if not isinstance(obj, dict):
            continue
        for key, value in obj.items():
            squashed = key.strip().casefold().replace("_", " ")
            if squashed == "is consistent":
                if isinstance(value, bool):
                    verdict = value
                elif isinstance(value, str) and value.casefold() in ("true", "false"):
                    verdict = value.casefold() == "true"
            elif squashed in ("score", "degradation score") and isinstance(value, (int, float)):
                score = int(round(value))
    if verdict is None:
        raise UnparseableReply("no is-consistent verdict found in reply", reply)
    return verdict, score


def mllm_check(original, edited, objects: str, cfg: CheckerConfig) -> CheckResult:
    """Ask the external checker to compare core objects across two frames."""
    if cfg.mode != "external":
        raise ValueError("mllm_check requires CheckerConfig(mode='external')")
    prompt = cfg.prompt_template.replace("<objects>", objects)
    payload = {
        "prompt": prompt,
        "images": [image_to_png_b64(original), image_to_png_b64(edited)],
    }
    last_error = None
    for _ in range(cfg.retries + 1):
        try:
            resp = requests.post(cfg.endpoint, json=payload, timeout=cfg.timeout_s)
            if resp.status_code >= 500:
                last_error = f"server error {resp.status_code}"
                continue
            reply = resp.text
            break
        except requests.RequestException as exc:
            last_error = str(exc)
    else:
        raise EndpointUnreachable(
            f"checker endpoint {cfg.endpoint} unreachable after {cfg.retries + 1} attempts: {last_error}"
        )

    verdict, score = parse_checker_reply(reply)
    if score is None or (score <= CONSISTENT_MAX_SCORE) != verdict:
        score = 0 if verdict else SCORE_MAX
    return CheckResult(
        is_consistent=verdict,
        degradation_score=score,
        rationale=f"external checker reply: {reply.strip()[:500]}",
    )


TICKET_STATUSES = ("pending", "masked", "regenerated", "accepted")


@dataclass
class CorrectionTicket:
    ticket_id: int
    t: int
    v: int
    check: CheckResult
    status: str = "pending"
    attempt: int = 0
    mask: np.ndarray | None = None
    recheck: CheckResult | None = None

    def _advance(self, new_status: str):
        order = TICKET_STATUSES.index
        if order(new_status) != order(self.status) + 1:
            raise ValueError(f"illegal ticket transition {self.status} -> {new_status}")
        self.status = new_status

    def as_dict(self) -> dict:
        return {
            "ticket_id": self.ticket_id,
            "t": self.t,
            "v": self.v,
            "status": self.status,
            "attempt": self.attempt,
            "check": self.check.as_dict(),
            "recheck": self.recheck.as_dict() if self.recheck else None,
        }


class TicketStore:
    """Serialized ticket state shared by the edit loop and the review service."""

    def __init__(self, path: Path | None = None):
        self._lock = threading.Lock()
        self._tickets: dict[int, CorrectionTicket] = {}
        self._next_id = 0
        self.path = Path(path) if path else None

    def new_ticket(self, t: int, v: int, check: CheckResult, attempt: int = 0) -> CorrectionTicket:
        with self._lock:
            ticket = CorrectionTicket(ticket_id=self._next_id, t=t, v=v, check=check, attempt=attempt)
            self._tickets[ticket.ticket_id] = ticket
            self._next_id += 1
            self._persist()
            return ticket

    def get(self, ticket_id: int) -> CorrectionTicket:
        with self._lock:
            return self._tickets[ticket_id]

    def all(self) -> list:
        with self._lock:
            return sorted(self._tickets.values(), key=lambda t: t.ticket_id)

    def pending(self) -> list:
        return [t for t in self.all() if t.status == "pending"]

    def set_mask(self, ticket_id: int, mask: np.ndarray) -> CorrectionTicket:
        with self._lock:
            ticket = self._tickets[ticket_id]
            ticket._advance("masked")
            ticket.mask = (np.asarray(mask) > 0).astype(np.uint8)
            self._persist()
            return ticket

    def mark_regenerated(self, ticket_id: int, recheck: CheckResult) -> CorrectionTicket:
        with self._lock:
            ticket = self._tickets[ticket_id]
            ticket._advance("regenerated")
            ticket.recheck = recheck
            self._persist()
            return ticket

    def accept(self, ticket_id: int) -> CorrectionTicket:
        with self._lock:
            ticket = self._tickets[ticket_id]
            ticket._advance("accepted")
            self._persist()
            return ticket

    def _persist(self):
        if self.path is None:
            return
        payload = [t.as_dict() for t in sorted(self._tickets.values(), key=lambda t: t.ticket_id)]
        self.path.write_text(json.dumps(payload, indent=1))


@dataclass
class LoopOutcome:
    accepted: dict = field(default_factory=dict)  # (t, v) -> image
    tickets: list = field(default_factory=list)


def run_feedback_loop(
    outputs: dict,
    originals,
    checker,
    store: TicketStore,
    mask_source=None,
    regenerate=None,
) -> LoopOutcome:
    """Check every generated frame; ticket failures; resolve masks if offered.

    `outputs` maps (t, v) to an edited image; `originals(t, v)` returns the
    source frame; `checker(original, edited, t, v)` yields a CheckResult;
    `mask_source(t, v)` may return a mask immediately (file path mode or
    ground truth in tests); `regenerate(t, v, mask, attempt)` produces a
    corrected frame and must be deterministic in its arguments so that the
    HTTP and file-based mask paths repair frames identically. Frames whose
    ticket stays pending are not accepted.
    """
    outcome = LoopOutcome()
    for (t, v), edited in sorted(outputs.items()):
        original = originals(t, v)
        result = checker(original, edited, t, v)
        if result.is_consistent:
            outcome.accepted[(t, v)] = edited
            continue
        ticket = store.new_ticket(t, v, result)
        outcome.tickets.append(ticket)
        mask = mask_source(t, v) if mask_source is not None else None
        if mask is None or regenerate is None:
            continue
        resolved = resolve_ticket(ticket.ticket_id, mask, originals, checker, store, regenerate)
        if resolved is not None:
            outcome.accepted[(t, v)] = resolved
    return outcome


def resolve_ticket(
    ticket_id: int,
    mask: np.ndarray,
    originals,
    checker,
    store: TicketStore,
    regenerate,
):
    """Mask arrival: regenerate once, re-check once, accept or re-ticket.

    Returns the corrected image when accepted, else None (a fresh pending
    ticket is filed for another round).
    """
    ticket = store.set_mask(ticket_id, mask)
    corrected = regenerate(ticket.t, ticket.v, ticket.mask, ticket.attempt)
    recheck = checker(originals(ticket.t, ticket.v), corrected, ticket.t, ticket.v)
    store.mark_regenerated(ticket_id, recheck)
    if recheck.is_consistent:
        store.accept(ticket_id)
        return corrected
    store.new_ticket(ticket.t, ticket.v, recheck, attempt=ticket.attempt + 1)
    return None
