"""HTTP API for live acquisition sessions.

A session runs one acquisition episode: the policy names the feature it
wants, the operator posts its raw value, and the response carries either
the next request or the final prediction, always with the per-template
score breakdown that justified the decision. Computations go through
exactly the same policy code as batch rollouts, so replaying a recorded
trace through the API reproduces it bit for bit.

Model artifacts are read-only; each session serialises its own
observation submissions behind a lock (concurrent posts to one session
queue rather than interleave).
"""

from __future__ import annotations

import json
import math
import threading
import time
import uuid
from contextlib import asynccontextmanager
from dataclasses import dataclass, field
from pathlib import Path

from fastapi import FastAPI
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from tafa.dataset import FeatureScaler
from tafa.policy import KnnPolicy, PolicyState
from tafa.predictor import predict_class

API_SCHEMA = "tafa.service/1"

AWAITING_VALUE = "awaiting_value"
ACTIVE = "active"
TERMINATED = "terminated"


@dataclass
class Deployment:
    """A servable policy: the library plus everything rollouts need."""

    library_id: str
    dataset_name: str
    policy: KnnPolicy
    feature_names: tuple[str, ...]
    ingest_scaler: FeatureScaler | None = None  # raw units -> model space

    def model_value(self, feature: int, raw: float) -> float:
        if self.ingest_scaler is None:
            return raw
        return self.ingest_scaler.transform_value(feature, raw)


@dataclass
class Session:
    session_id: str
    deployment: Deployment
    lam: float
    k: int
    state: PolicyState
    pending_feature: int | None
    status: str = AWAITING_VALUE
    trace: list = field(default_factory=list)
    last_explanation: dict | None = None
    prediction: list | None = None
    predicted_class: int | None = None
    aborted: bool = False
    created_at: float = field(default_factory=time.time)
    updated_at: float = field(default_factory=time.time)
    lock: threading.Lock = field(default_factory=threading.Lock)


def _error(status_code: int, code: str, message: str, detail=None) -> JSONResponse:
    return JSONResponse(
        status_code=status_code,
        content={"code": code, "message": message, "detail": detail},
    )


class CreateSessionRequest(BaseModel):
    library_id: str
    lambda_override: float | None = Field(default=None, alias="lambda")
    k: int | None = None

    model_config = {"populate_by_name": True}


class ObserveRequest(BaseModel):
    feature: int
    value: float = Field(allow_inf_nan=True)  # rejected with a typed error below


def _explanation(deployment: Deployment, state: PolicyState, est, scores, selected):
    observed = set(state.observed)
    rows = []
    for t, tpl in enumerate(deployment.policy.library.templates):
        remaining = sum(
            float(deployment.policy.costs.costs[j]) for j in tpl if j not in observed
        )
        rows.append(
            {
                "index": t,
                "features": list(tpl),
                "feature_names": [deployment.feature_names[j] for j in tpl],
                "estimated_loss": float(est[t]),
                "remaining_cost": remaining,
                "total_score": float(scores[t]),
            }
        )
    return {"templates": rows, "selected": int(selected)}


def _session_body(session: Session) -> dict:
    body = {
        "schema": API_SCHEMA,
        "session_id": session.session_id,
        "library_id": session.deployment.library_id,
        "status": session.status,
        "lambda": session.lam,
        "k": session.k,
        "aborted": session.aborted,
        "trace": session.trace,
        "observations": {
            str(f): session.state.values[f] for f in session.state.observed
        },
        "explanation": session.last_explanation,
    }
    if session.pending_feature is not None:
        dep = session.deployment
        body["request"] = {
            "feature": int(session.pending_feature),
            "name": dep.feature_names[session.pending_feature],
        }
    if session.prediction is not None:
        body["prediction"] = session.prediction
        body["predicted_class"] = session.predicted_class
    return body


def create_app(
    deployments: dict[str, Deployment], snapshot_dir: str | None = None
) -> FastAPI:
    sessions: dict[str, Session] = {}
    registry_lock = threading.Lock()

    @asynccontextmanager
    async def lifespan(_app: FastAPI):
        yield
        if snapshot_dir is None:
            return
        # persistence format is the session trace JSON served by GET
        out = Path(snapshot_dir)
        out.mkdir(parents=True, exist_ok=True)
        for session in sessions.values():
            with session.lock:
                body = _session_body(session)
            (out / f"session-{session.session_id}.json").write_text(json.dumps(body))

    app = FastAPI(title="tafa acquisition service", lifespan=lifespan)

    @app.get("/health")
    def health():
        return {"schema": API_SCHEMA, "status": "ok", "libraries": len(deployments)}

    @app.get("/libraries")
    def libraries():
        out = []
        for dep in deployments.values():
            lib = dep.policy.library
            out.append(
                {
                    "id": dep.library_id,
                    "dataset": dep.dataset_name,
                    "lambda": lib.lam,
                    "o_init": lib.o_init,
                    "n_templates": len(lib.templates),
                    "templates": [list(t) for t in lib.templates],
                    "feature_names": list(dep.feature_names),
                    "k": dep.policy.k,
                }
            )
        return {"schema": API_SCHEMA, "libraries": out}

    @app.post("/sessions", status_code=201)
    def create_session(req: CreateSessionRequest):
        dep = deployments.get(req.library_id)
        if dep is None:
            return _error(404, "library_not_found", f"no library '{req.library_id}'")
        if req.k is not None and req.k < 1:
            return _error(422, "invalid_parameter", "k must be at least 1")
        if req.lambda_override is not None and req.lambda_override < 0:
            return _error(422, "invalid_parameter", "lambda must be nonnegative")
        session = Session(
            session_id=uuid.uuid4().hex,
            deployment=dep,
            lam=dep.policy.lam if req.lambda_override is None else req.lambda_override,
            k=dep.policy.k if req.k is None else req.k,
            state=PolicyState(),
            pending_feature=dep.policy.library.o_init,
        )
        with registry_lock:
            sessions[session.session_id] = session
        return {
            "schema": API_SCHEMA,
            "session_id": session.session_id,
            "library_id": dep.library_id,
            "status": session.status,
            "request": _feature_request(dep, session.pending_feature),
        }

    def _feature_request(dep: Deployment, feature: int) -> dict:
        return {"feature": int(feature), "name": dep.feature_names[feature]}

    @app.post("/sessions/{session_id}/observe")
    def observe(session_id: str, req: ObserveRequest):
        session = sessions.get(session_id)
        if session is None:
            return _error(404, "session_not_found", f"no session '{session_id}'")
        with session.lock:
            if session.status == TERMINATED:
                return _error(
                    409, "session_terminated", "session no longer accepts observations"
                )
            if req.feature != session.pending_feature:
                return _error(
                    409,
                    "unexpected_feature",
                    f"expected feature {session.pending_feature}, got {req.feature}",
                    detail={"expected": session.pending_feature},
                )
            if not math.isfinite(req.value):
                return _error(422, "invalid_value", "value must be finite")
            session.status = ACTIVE
            dep = session.deployment
            policy = dep.policy
            feature = int(req.feature)
            model_value = dep.model_value(feature, float(req.value))
            std_value = policy.scaler.transform_value(feature, model_value)
            session.state.observe(feature, model_value, std_value)
            session.state.step += 1

            est = policy.neighbor_losses(session.state, session.k)
            selected, scores = policy.select_template(
                session.state, session.lam, session.k, est=est
            )
            action = policy.next_action(session.state, selected)
            explanation = _explanation(dep, session.state, est, scores, selected)
            session.last_explanation = explanation
            row = {
                "step": len(session.trace) + 1,
                "feature": feature,
                "feature_name": dep.feature_names[feature],
                "raw_value": float(req.value),
                "standardized_value": std_value,
                "selected_template": int(selected),
                "scores": [float(s) for s in scores],
            }
            if action.is_terminate:
                probs = policy.predict(session.state)
                session.prediction = [float(p) for p in probs]
                session.predicted_class = predict_class(probs)
                session.pending_feature = None
                session.status = TERMINATED
                row["action"] = "terminate"
                session.trace.append(row)
                session.updated_at = time.time()
                return {
                    "schema": API_SCHEMA,
                    "session_id": session.session_id,
                    "status": session.status,
                    "explanation": explanation,
                    "terminate": {
                        "prediction": session.prediction,
                        "predicted_class": session.predicted_class,
                        "predicted_label": _label(dep, session.predicted_class),
                    },
                }
            session.pending_feature = int(action.feature)
            session.status = AWAITING_VALUE
            row["action"] = "acquire"
            row["next_feature"] = session.pending_feature
            session.trace.append(row)
            session.updated_at = time.time()
            return {
                "schema": API_SCHEMA,
                "session_id": session.session_id,
                "status": session.status,
                "explanation": explanation,
                "acquire": _feature_request(dep, session.pending_feature),
            }

    def _label(dep: Deployment, cls: int):
        values = dep.policy.model.label_values
        if values and cls < len(values):
            value = values[cls]
            return value if isinstance(value, (int, float, str)) else str(value)
        return cls

    @app.get("/sessions/{session_id}")
    def get_session(session_id: str):
        session = sessions.get(session_id)
        if session is None:
            return _error(404, "session_not_found", f"no session '{session_id}'")
        with session.lock:
            return _session_body(session)

    @app.delete("/sessions/{session_id}")
    def abort_session(session_id: str):
        session = sessions.get(session_id)
        if session is None:
            return _error(404, "session_not_found", f"no session '{session_id}'")
        with session.lock:
            session.status = TERMINATED
            session.aborted = True
            session.pending_feature = None
            session.updated_at = time.time()
            return {
                "schema": API_SCHEMA,
                "session_id": session.session_id,
                "status": session.status,
                "aborted": True,
            }

    return app


def build_deployment(
    library_id: str,
    dataset_name: str,
    dataset,
    split,
    library,
    costs=None,
    k: int = 10,
) -> Deployment:
    from tafa.policy import build_policy

    policy = build_policy(dataset, split, library, costs, k=k)
    return Deployment(
        library_id=library_id,
        dataset_name=dataset_name,
        policy=policy,
        feature_names=dataset.feature_names,
        ingest_scaler=dataset.scaler,
    )
