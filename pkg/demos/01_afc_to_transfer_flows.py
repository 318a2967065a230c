"""From swipe records to transfer-flow counts.

Transfers leave no swipe, so they are inferred: each trip whose entry and
exit lines differ is routed over the network, and the moment it passes each
transfer station is interpolated from the hop counts on either side.
The synthetic generator knows the true transfer instants, so the recovered
counts can be checked bin by bin.
"""
import io

import numpy as np

from metroflow import (SynthConfig, aggregate, clean_records, default_network, extract_transfers,
                       generate_afc, parse_afc_csv, split_by_line_consistency)
from metroflow.afc import write_afc_csv
from metroflow.network import RouteCache, best_route

net = default_network()
route = best_route(net, "S01", "S13")
print("S01 -> S13:", " | ".join(f"line {line}: {'-'.join(st)}" for line, st in route.legs))
for tr in route.transfers:
    print(f"  transfer at {tr.station} after {tr.n_before} of {route.hops} hops")

cfg = SynthConfig(days=7, seed=1)
records, truth = generate_afc(cfg)

# round-trip through the CSV format the ingest step reads
buf = io.StringIO()
write_afc_csv(records, buf)
parsed = parse_afc_csv(buf.getvalue())
kept, report = clean_records(parsed.records, net)
print(f"\n{report.valid_out}/{report.total_in} records valid")

candidates, single = split_by_line_consistency(kept)
print(f"{len(candidates)} trips change line, {len(single)} stay on one line")

ext = extract_transfers(candidates, net, RouteCache(net))
for st in net.transfer_stations:
    series = aggregate(ext.events, st, cfg.interval, cfg.day_window, cfg.dates).series
    err = np.abs(series.counts - truth.transfer_counts[st]).sum()
    peak = series.timestamps()[int(np.argmax(series.counts))]
    print(f"{st}: {series.counts.sum()} transfers, summed bin error {err} vs truth, busiest bin {peak:%a %H:%M}")
