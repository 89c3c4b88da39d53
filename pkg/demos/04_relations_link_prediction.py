"""Relations as translations: link prediction on a consistent graph.

A 20-entity chain graph ("next" and "skip" links) admits an exact
translation embedding.  Training the translation-distance variant drives
the relation residuals to zero and ranks every true target first.
"""

from typespace import synth
from typespace.evalharness import EmbeddingView, eval_link_prediction, eval_triple_classification
from typespace.objective import rel_dist_loss
from typespace.optimize import TrainConfig, train
from typespace.params import Hyperparams, init_parameters

data = synth.chain_graph(20)
hp = Hyperparams(n=10, alpha_mix=0.0, beta_reg=0.0, epochs=20, variant="rel_dist", seed=3)

init = init_parameters(data.n_entities, data.n_words, data.type_system, data.triples, hp)
initial = rel_dist_loss(data.triples, init.model, init.rels)
params, report = train(data, TrainConfig(hp=hp, shuffle_seed=3), init)
final = report.losses[-1].j_rel_dist
print(f"translation loss: {initial:.4f} -> {final:.6f} ({final / initial:.2%} of initial)")

ids = tuple(f"e{i:02d}" for i in range(20))
view = EmbeddingView(
    entity_ids=ids,
    points=params.model.entity_points,
    rel_ids=data.triples.relation_ids,
    rel_vectors=params.rels.vectors,
)
triples = [(ids[e], data.triples.relation_ids[k], ids[f]) for e, k, f in data.triples.triples]
lp = eval_link_prediction(triples, view)
print(f"link prediction over {lp['n_ranks']} ranks: mean rank {lp['mean_rank']:.2f}, hits@10 {lp['hits_at_10']:.2f}")

# classification: true triples against corrupted tails, split per relation
labeled = []
seen = {}
for h, r, t in triples:
    seen[r] = seen.get(r, 0) + 1
    split = "valid" if seen[r] % 2 == 1 else "test"
    labeled.append((h, r, t, 1, split))
    labeled.append((h, r, ids[(int(t[1:]) + 7) % 20], 0, split))
valid = [(h, r, t, y) for h, r, t, y, s in labeled if s == "valid"]
test = [(h, r, t, y) for h, r, t, y, s in labeled if s == "test"]
tc = eval_triple_classification(valid, test, view)
print(f"triple classification accuracy: {tc['accuracy']:.2f} on {tc['n_test']} test rows")
