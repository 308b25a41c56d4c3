"""Friedman / Nemenyi analysis of the bundled accuracy table.

Also runs the same pipeline from the published average ranks, which is
where the two routes disagree: ties in the table shift a few ranks.
"""
from persreg import stats
from persreg.stats import RankTable

table = stats.published_accuracies()
ranks = stats.rank_table(table)
fr = stats.friedman(ranks)
print("average ranks from the table:")
for m, r in sorted(zip(ranks.methods, ranks.average_ranks), key=lambda t: t[1]):
    print(f"  {m:>4} {r:.3f}")
print(f"chi2 = {fr.chi2:.4f} (p = {fr.chi2_p:.3g}); F({fr.df_num}, {fr.df_den}) = {fr.iman_davenport_f:.4f} "
      f"(p = {fr.iman_davenport_p:.3g})")

methods, avg, _ = stats.published_ranks()
pub = RankTable.from_average_ranks(methods, avg, table.accuracies.shape[1])
fp = stats.friedman(pub)
print(f"from published ranks: F p = {fp.iman_davenport_p:.3g}")

print("Nemenyi p-values (table):")
print(stats.format_matrix_csv(ranks.methods, stats.nemenyi(ranks)))
print(stats.cd_diagram_data(ranks, 0.05).to_text())
print(stats.cd_diagram_data(pub, 0.05).to_text())
