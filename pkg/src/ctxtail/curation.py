"""Local web service for expert curation of phrase clusters.

JSON over HTTP on loopback, no auth.  Endpoints:

    GET  /api/clusters?page=0&size=50[&expert=ID][&sort=size|rate][&unvoted=1]
    POST /api/vote          {"expert_id", "cluster_id", "decision"[, "note"]}
    GET  /api/progress
    POST /api/finalize

Votes are appended to the votes file immediately; per (expert, cluster) the
last write wins.  Finalize runs the majority selection and writes the
registry; calling it again just rewrites the same content.  Static UI assets
are served from ``ui_dir`` when one is provided and built.
"""

from __future__ import annotations

import json
import logging
import threading
from datetime import datetime, timezone
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from urllib.parse import parse_qs, urlparse

from .clustering import ClusterStats
from .registry import (
    ExpertVote,
    NegationConfig,
    append_vote,
    build_registry,
    ingest_votes,
    majority_select,
    read_votes,
)

log = logging.getLogger(__name__)


class CurationState:
    """Shared, lock-protected vote state behind the endpoints."""

    def __init__(
        self,
        clusters: dict[int, ClusterStats],
        phrases_by_cluster: dict[int, list[tuple[str, ...]]],
        roster: tuple[str, ...],
        votes_path: str | Path,
        registry_sink,
        negation: NegationConfig = NegationConfig(),
        significant_products: dict[int, tuple[str, ...]] | None = None,
    ):
        self.clusters = clusters
        self.phrases_by_cluster = phrases_by_cluster
        self.roster = tuple(roster)
        self.votes_path = Path(votes_path)
        self.registry_sink = registry_sink  # callable(Registry) -> str (path or label)
        self.negation = negation
        self.significant_products = significant_products or {}
        self.lock = threading.Lock()
        self.votes: dict[tuple[str, int], ExpertVote] = {}
        if self.votes_path.exists():
            for v in read_votes(self.votes_path):
                self.votes[(v.expert_id, v.cluster_id)] = v

    def tally(self, cluster_id: int) -> dict:
        accepts = sum(
            1 for (e, c), v in self.votes.items() if c == cluster_id and v.decision == "accept"
        )
        rejects = sum(
            1 for (e, c), v in self.votes.items() if c == cluster_id and v.decision == "reject"
        )
        return {"accepts": accepts, "rejects": rejects}

    def cluster_payload(self, cluster_id: int, expert: str | None) -> dict:
        s = self.clusters[cluster_id]
        my = self.votes.get((expert, cluster_id)) if expert else None
        return {
            "cluster_id": cluster_id,
            "size": s.size,
            "avg_propensity_rate": s.avg_propensity_rate,
            "avg_relative_position": s.avg_relative_position,
            "avg_sentence_length": s.avg_sentence_length,
            "pct_past_tense": s.pct_past_tense,
            "pct_with_sentiment": s.pct_with_sentiment,
            "sample_phrases": list(s.sample_phrases),
            "my_vote": my.decision if my else None,
            "tally": self.tally(cluster_id),
        }

    def list_clusters(self, page: int, size: int, expert: str | None, sort: str, unvoted_first: bool) -> dict:
        ids = sorted(self.clusters)
        if sort == "size":
            ids.sort(key=lambda c: (-self.clusters[c].size, c))
        elif sort == "rate":
            ids.sort(key=lambda c: (-self.clusters[c].avg_propensity_rate, c))
        if unvoted_first and expert:
            ids.sort(key=lambda c: (expert, c) in self.votes)
        chunk = ids[page * size : (page + 1) * size]
        return {
            "total": len(ids),
            "page": page,
            "size": size,
            "clusters": [self.cluster_payload(c, expert) for c in chunk],
        }

    def record_vote(self, expert_id: str, cluster_id: int, decision: str, note: str = "") -> dict:
        if expert_id not in self.roster:
            raise ValueError(f"unknown expert_id: {expert_id!r} (roster: {', '.join(self.roster)})")
        if cluster_id not in self.clusters:
            raise ValueError(f"unknown cluster_id: {cluster_id}")
        if decision not in ("accept", "reject"):
            raise ValueError(f"decision must be accept or reject, got {decision!r}")
        vote = ExpertVote(
            expert_id=expert_id,
            cluster_id=cluster_id,
            decision=decision,
            timestamp=datetime.now(timezone.utc).isoformat(),
            note=note,
        )
        with self.lock:
            self.votes[(expert_id, cluster_id)] = vote
            append_vote(vote, self.votes_path)
        return {"ok": True, "tally": self.tally(cluster_id)}

    def progress(self) -> dict:
        per_expert = {
            e: sum(1 for (ve, _) in self.votes if ve == e) for e in self.roster
        }
        total_pairs = len(self.roster) * len(self.clusters)
        return {
            "total_clusters": len(self.clusters),
            "roster": list(self.roster),
            "per_expert": per_expert,
            "voted_pairs": len(self.votes),
            "total_pairs": total_pairs,
            "complete": len(self.votes) == total_pairs,
        }

    def finalize(self) -> dict:
        with self.lock:
            table = ingest_votes(list(self.votes.values()), self.roster, sorted(self.clusters))
            selected = majority_select(table)
            payload: dict = {"selected": selected, "n_selected": len(selected)}
            uncovered = table.incomplete_clusters()
            if uncovered:
                payload["warning"] = {
                    "message": "finalizing with incomplete coverage; missing votes count as reject",
                    "uncovered_clusters": uncovered,
                }
            if selected:
                registry = build_registry(
                    {
                        cid: {
                            "phrases": self.phrases_by_cluster.get(cid, []),
                            "significant_products": self.significant_products.get(cid, ()),
                        }
                        for cid in selected
                    },
                    self.negation,
                )
                payload["registry"] = str(self.registry_sink(registry))
                payload["n_variables"] = len(registry)
            else:
                payload["registry"] = None
                payload["n_variables"] = 0
            return payload


FALLBACK_PAGE = """<!doctype html>
<html><head><title>cluster curation</title></head>
<body><h1>Cluster curation service</h1>
<p>No UI assets are built. The JSON interface is live:</p>
<ul><li>GET /api/clusters?page=0&amp;size=50</li>
<li>POST /api/vote</li><li>GET /api/progress</li><li>POST /api/finalize</li></ul>
</body></html>"""

_MIME = {".html": "text/html", ".js": "text/javascript", ".css": "text/css", ".svg": "image/svg+xml"}


def make_handler(state: CurationState, ui_dir: Path | None):
    class Handler(BaseHTTPRequestHandler):
        def _send(self, code: int, payload: dict | str, content_type="application/json"):
            body = (
                json.dumps(payload).encode("utf-8")
                if isinstance(payload, dict)
                else payload.encode("utf-8")
            )
            self.send_response(code)
            self.send_header("Content-Type", content_type)
            self.send_header("Content-Length", str(len(body)))
            self.send_header("Access-Control-Allow-Origin", "*")
            self.end_headers()
            self.wfile.write(body)

        def do_GET(self):
            url = urlparse(self.path)
            q = {k: v[0] for k, v in parse_qs(url.query).items()}
            if url.path == "/api/clusters":
                payload = state.list_clusters(
                    page=int(q.get("page", 0)),
                    size=int(q.get("size", 50)),
                    expert=q.get("expert"),
                    sort=q.get("sort", "id"),
                    unvoted_first=q.get("unvoted", "0") == "1",
                )
                self._send(200, payload)
            elif url.path == "/api/progress":
                self._send(200, state.progress())
            else:
                self._serve_static(url.path)

        def _serve_static(self, path: str):
            if ui_dir is not None:
                rel = "index.html" if path == "/" else path.lstrip("/")
                target = (ui_dir / rel).resolve()
                if target.is_file() and str(target).startswith(str(ui_dir.resolve())):
                    body = target.read_bytes()
                    self.send_response(200)
                    self.send_header("Content-Type", _MIME.get(target.suffix, "application/octet-stream"))
                    self.send_header("Content-Length", str(len(body)))
                    self.end_headers()
                    self.wfile.write(body)
                    return
            if path == "/":
                self._send(200, FALLBACK_PAGE, content_type="text/html")
            else:
                self._send(404, {"error": f"not found: {path}"})

        def do_POST(self):
            url = urlparse(self.path)
            length = int(self.headers.get("Content-Length", 0))
            raw = self.rfile.read(length) if length else b"{}"
            try:
                body = json.loads(raw) if raw.strip() else {}
            except json.JSONDecodeError:
                self._send(400, {"error": "request body is not valid JSON"})
                return
            if url.path == "/api/vote":
                try:
                    result = state.record_vote(
                        expert_id=str(body.get("expert_id", "")),
                        cluster_id=int(body.get("cluster_id", -1)),
                        decision=str(body.get("decision", "")),
                        note=str(body.get("note", "")),
                    )
                    self._send(200, result)
                except (ValueError, KeyError) as exc:
                    self._send(400, {"error": str(exc)})
            elif url.path == "/api/finalize":
                self._send(200, state.finalize())
            else:
                self._send(404, {"error": f"not found: {url.path}"})

        def log_message(self, fmt, *args):
            log.debug("curation http: " + fmt, *args)

    return Handler


def serve(state: CurationState, port: int, ui_dir: Path | None = None, host: str = "127.0.0.1"):
    """Bind and return the server (caller decides threading); raises if the port is busy."""
    try:
        server = ThreadingHTTPServer((host, port), make_handler(state, ui_dir))
    except OSError as exc:
        raise OSError(f"cannot bind {host}:{port}: {exc}") from exc
    return server
