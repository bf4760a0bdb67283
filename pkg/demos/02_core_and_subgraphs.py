# %% [markdown]
# # Core selection and outer subgraphs
#
# A small, dense core is embedded directly. Everything else is split into
# connected, size-bounded subgraphs that are processed one at a time.

# %%
import numpy as np

from kgprop.blocs import partition, partition_stats
from kgprop.core import select_core_degree, select_core_hybrid
from kgprop.synthetic import preferential_attachment

store = preferential_attachment(20_000, edges_per_node=3, n_relations=12, seed=42)

# %%
core = select_core_degree(store, eta_n=0.05)
print("degree core:", core.n_entities, "entities,", len(core.triples), "triples")
print("relations covered:", int(core.relation_coverage.sum()), "/", store.n_relations)

# %%
# The hybrid strategy adds the strongest edges of each relation and
# reconnects the pieces through shortest paths.
hybrid = select_core_hybrid(store, eta_n=0.02, eta_e=0.002)
print("hybrid core:", hybrid.n_entities, "entities, reconnection paths:", len(hybrid.paths))

# %%
part = partition(store, core, h=0.6, m=2000, seed=0)
sizes = [len(s) for s in part.subgraphs]
print(len(sizes), "subgraphs; sizes min/median/max:", min(sizes), int(np.median(sizes)), max(sizes))

# %%
for key, value in partition_stats(part, store).items():
    print(f"{key:>24}: {value}")

# %% [markdown]
# `h` decides when diffusion hands over to dilation. Diffused subgraphs
# overlap, dilated ones do not, so a large `h` costs replication.

# %%
for h in (0.2, 0.4, 0.6, 0.8):
    p = partition(store, core, h=h, m=2000, seed=0)
    print(h, len(p.subgraphs), round(partition_stats(p, store)["replication_factor"], 3))
