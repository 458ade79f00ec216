from normstab.config import parse_config
from normstab.runner import SUMMARY_HEADER, run_experiment, summary_csv, sweep

CFG = """
[experiment]
seeds = 4, 5, 6
eval_horizon = 10
eval_sequences = 2
[cell]
hidden_size = 3
[train]
max_epochs = 2
[task]
seq_len = 5
train_size = 40
dev_size = 8
test_size = 8
"""


def test_summary_has_one_row_per_seed_and_is_reproducible():
    config = parse_config(CFG)
    a = run_experiment(config).summary_csv()
    b = run_experiment(config).summary_csv()
    assert a == b
    lines = a.splitlines()
    assert lines[0] == ",".join(SUMMARY_HEADER)
    assert [l.split(",")[0] for l in lines[1:]] == ["4", "5", "6"]


def test_failed_seed_is_marked_and_others_continue(tmp_path):
    config = parse_config(CFG)
    res = run_experiment(config, tmp_path, fault_injector=lambda epoch, b: True)
    rows = (tmp_path / "summary.csv").read_text().splitlines()[1:]
    assert len(rows) == 3
    for row in rows:
        fields = row.split(",")
        assert fields[3] == fields[4] == "failed"
        assert int(fields[6]) > 30
    assert all(r.failed for r in res.seeds)


def test_sweep_order_and_table(tmp_path):
    config = parse_config(CFG.replace("4, 5, 6", "1"))
    out = sweep(config, [500, 0, 50], tmp_path)
    assert [e.config.regularizer.beta for e in out] == [500.0, 0.0, 50.0]
    text = (tmp_path / "sweep.csv").read_text()
    assert text == summary_csv([r for e in out for r in e.seeds])
    assert [l.split(",")[1] for l in text.splitlines()[1:]] == ["500.0", "0.0", "50.0"]
