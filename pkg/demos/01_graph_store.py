# %% [markdown]
# # Loading a knowledge graph
#
# Triples go in as `head<TAB>relation<TAB>tail` lines. The store keeps
# integer ids, CSR adjacency in both directions and the label tables.

# %%
import tempfile
from pathlib import Path

import numpy as np

from kgprop.graph import (
    add_inverse_relations,
    graph_stats,
    ingest_triples,
    largest_connected_component,
    load_store,
    save_store,
    write_triples,
)
from kgprop.synthetic import preferential_attachment

work = Path(tempfile.mkdtemp())

# %%
# A scale-free graph stands in for real data; write it out as text first.
pa = preferential_attachment(5000, edges_per_node=3, n_relations=6, seed=1)
write_triples(pa, work / "graph.tsv")
print((work / "graph.tsv").read_text().splitlines()[:3])

# %%
store = largest_connected_component(ingest_triples(work / "graph.tsv"))
print(store.n_entities, "entities,", store.n_relations, "relations,", store.n_triples, "triples")

# %%
stats = graph_stats(store, mspl_samples=64, seed=0)
for key, value in stats.to_dict().items():
    print(f"{key:>22}: {value}")

# %% [markdown]
# Degrees are heavy-tailed: a handful of hubs touch a large share of edges.

# %%
deg = np.sort(store.degree)[::-1]
print("top 5 degrees:", deg[:5].tolist())
print("share of edge endpoints on top 1% of entities:", round(deg[: len(deg) // 100].sum() / deg.sum(), 3))

# %%
# Training sees each relation in both directions.
aug = add_inverse_relations(store)
print(aug.relation_labels)

# %%
# The binary cache round-trips exactly.
save_store(store, work / "store.spkg")
again = load_store(work / "store.spkg")
print("identical after reload:", np.array_equal(again.triples, store.triples))
