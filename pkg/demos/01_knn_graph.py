"""Build a nearest-neighbour graph on random servers and look at its in-degrees.

In one dimension each node has in-degree 0, 1 or 2, and the number of
"lonely" servers (in-degree 0) always equals the number of double-booked
ones (in-degree 2).
"""

from nnshift import build_knn_graph, in_degree_counts, mutual_pairs, sample_points, star_counts, counts_from_stars, weak_components

ps = sample_points(1000, 1, seed=7)
g = build_knn_graph(ps, k=1)
q = in_degree_counts(g, alpha_k=2)
print("in-degree counts Q_0..Q_2:", q.q.tolist())

# Star counts carry the same information as the degree tally.
stars = star_counts(g, 2)
print("stars with 1 and 2 leaves:", stars.i_counts.tolist())
print("recovered from stars:", counts_from_stars(stars, 2) == q)

comps = weak_components(g)
print(f"{len(comps)} weak components, {len(mutual_pairs(g))} mutual nearest-neighbour pairs")

# Same thing in the plane with k = 2: in-degrees stay below 5 * 2.
g2 = build_knn_graph(sample_points(1000, 2, seed=7), k=2)
print("2D, k=2 in-degree tally:", in_degree_counts(g2, 10).q.tolist())
