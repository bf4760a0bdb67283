# %% [markdown]
# # Full pipeline and link prediction
#
# `run_pipeline` does what `kgprop run --config pipeline.yaml` does: split
# off held-out triples, select the core, partition, train, propagate and
# score the test triples.

# %%
import json
import tempfile
from pathlib import Path

from kgprop.config import PipelineConfig
from kgprop.evaluate import queriability_probe
from kgprop.pipeline import run_pipeline
from kgprop.synthetic import planted_distmult

out = Path(tempfile.mkdtemp())
store, _ = planted_distmult(800, n_relations=4, dim=16, tails_per_query=5, seed=3)

cfg = PipelineConfig(output_dir=str(out))
cfg.core.eta_n = 0.25
cfg.blocs.m = 300
cfg.train.d, cfg.train.n_epoch, cfg.train.b, cfg.train.p, cfg.train.lr = 32, 40, 64, 16, 1e-2
cfg.eval.enabled = True
cfg.eval.n_negatives = 500
print(cfg.dumps())

# %%
result = run_pipeline(cfg, store=store)
print(json.dumps(result["metrics"], indent=2))
print(json.dumps(result["timings"], indent=2))

# %%
print(sorted(p.name for p in out.iterdir()))

# %% [markdown]
# The probe asks whether a relation can be followed inside embedding space:
# from a head's row, apply the relation and look for the known tail among
# the ten nearest rows.

# %%
ckpt, kept = result["checkpoint"], result["store"]
for r in range(4):
    print(kept.relation_labels[r], round(queriability_probe(kept.triples, r, ckpt.entities, ckpt.relations), 3))
