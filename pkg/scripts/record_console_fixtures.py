"""Record live service responses as fixtures for the console contract
tests. Bodies are written exactly as served (raw bytes), since the
console's export feature must round-trip them byte for byte.

Run:  python scripts/record_console_fixtures.py
"""

from pathlib import Path

from fastapi.testclient import TestClient

from tafa.dataset import CostModel, generate_cube, split
from tafa.policy import build_policy
from tafa.predictor import fit_gaussian_nb
from tafa.search import SearchConfig, SubsetLossEvaluator, TemplateLibrary, greedy_search
from tafa.service import Deployment, create_app

OUT = Path(__file__).resolve().parent.parent / "frontend" / "fixtures"


def main():
    dataset = generate_cube(400, 0.1, seed=9)
    sp = split(dataset, 0.25, seed=9)
    model = fit_gaussian_nb(dataset, sp.train_indices)
    costs = CostModel.uniform(20)
    evaluator = SubsetLossEvaluator(
        model, dataset.features[sp.train_indices], dataset.labels[sp.train_indices]
    )
    cfg = SearchConfig(
        n_templates=3, n_candidates=120, n_rounds=1, lam=0.08, o_init=7, seed=9
    )
    templates, _ = greedy_search(evaluator, cfg, costs)
    library = TemplateLibrary(o_init=7, lam=0.08, templates=tuple(templates))
    policy = build_policy(
        dataset, sp, library, costs, k=10, model=model, evaluator=evaluator
    )
    dep = Deployment(
        library_id="cube-demo",
        dataset_name="cube-400",
        policy=policy,
        feature_names=dataset.feature_names,
        ingest_scaler=dataset.scaler,
    )
    client = TestClient(create_app({"cube-demo": dep}))
    OUT.mkdir(parents=True, exist_ok=True)

    def dump(name: str, response):
        (OUT / name).write_bytes(response.content)
        print(f"wrote {name} ({len(response.content)} bytes)")

    dump("libraries.json", client.get("/libraries"))

    instance = dataset.features[sp.test_indices[0]]
    created = client.post("/sessions", json={"library_id": "cube-demo"})
    dump("session_create.json", created)
    sid = created.json()["session_id"]
    feature = created.json()["request"]["feature"]
    step = 0
    while True:
        r = client.post(
            f"/sessions/{sid}/observe",
            json={"feature": feature, "value": float(instance[feature])},
        )
        step += 1
        dump(f"observe_{step:02d}.json", r)
        body = r.json()
        if body["status"] == "terminated":
            break
        feature = body["acquire"]["feature"]
    dump("session_terminated.json", client.get(f"/sessions/{sid}"))


if __name__ == "__main__":
    main()
