import json
import subprocess
import sys

from streamlag.cli import main


def test_trace_simulate_dal_chain(tmp_path, capsys):
    tr = tmp_path / "t.json"
    tl = tmp_path / "tl.jsonl"
    assert main(["trace-gen", "--tokens", "40", "--out", str(tr)]) == 0
    assert main(["simulate", "--trace", str(tr), "--k", "2", "--out", str(tl)]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["N_t"] == 40
    assert main(["dal", str(tl)]) == 0
    again = json.loads(capsys.readouterr().out)
    assert again["DAL"] == summary["DAL"]


def test_local_agreement_with_toy_decoder(tmp_path, capsys):
    tr = tmp_path / "t.json"
    main(["trace-gen", "--tokens", "6", "--frames-per-token", "8", "--frame-duration", "0.04",
          "--width", "8", "--vocab", "16", "--no-frames", "--out", str(tr)])
    assert main(["simulate", "--trace", str(tr), "--policy", "local-agreement", "--decoder", "toy",
                 "--chunk", "0.32"]) == 0
    assert json.loads(capsys.readouterr().out)["policy"] == "local-agreement"


def test_sweep_writes_reports(tmp_path, capsys):
    cfg = {"grid": [{"policy": "wait-k", "k": 1}, {"policy": "wait-k", "k": "inf"}],
           "traces": [{"num_tokens": 30}]}
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(cfg))
    assert main(["sweep", "--config", str(p), "--out-dir", str(tmp_path / "o")]) == 0
    assert (tmp_path / "o" / "report.csv").exists()
    assert "wait-k" in capsys.readouterr().out


def test_contract_errors_exit_2(tmp_path):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps({"grid": [], "traces": [{"num_tokens": 3}]}))
    assert main(["sweep", "--config", str(p)]) == 2


def test_masks_render(capsys, tmp_path):
    assert main(["masks", "--kind", "mocha", "--frames", "4", "--chunk", "2"]) == 0
    assert capsys.readouterr().out.splitlines()[:2] == ["##..", "##.."]
    out = tmp_path / "m.bin"
    assert main(["masks", "--kind", "mfla", "--frames", "6", "--span", "1", "--out", str(out)]) == 0
    assert capsys.readouterr().out.splitlines() == ["####..", "######", "######"]
    assert out.stat().st_size > 0


def test_console_module_runs():
    r = subprocess.run([sys.executable, "-m", "streamlag", "masks", "--kind", "mocha", "--frames", "2"],
                       capture_output=True, text=True)
    assert r.returncode == 0 and r.stdout.splitlines() == ["#.", "##"]
