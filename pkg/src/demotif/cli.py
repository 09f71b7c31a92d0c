"""``demotif`` command-line entry point.

Exit codes: 0 success, 1 usage error, 2 runtime or data error.  Results
go to stdout, diagnostics to stderr.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from . import model as M
from . import motif as MO
from . import score as SC
from . import seqdata as SD

log = logging.getLogger("demotif")


class UsageError(Exception):
    pass


class StageError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# run configuration
# ---------------------------------------------------------------------------

def _pools(v: str) -> tuple[int, ...]:
    return tuple(int(x) for x in v.replace(" ", "").split(",") if x)


def _floats(v: str) -> tuple[float, ...]:
    return tuple(float(x) for x in v.replace(" ", "").split(",") if x)


def _bool(v: str) -> bool:
    if v.lower() in ("1", "true", "yes"):
        return True
    if v.lower() in ("0", "false", "no"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


@dataclass
class RunConfig:
    # model
    n_conv_layers: int = 3
    conv_units: int = 128
    filter_len: int = 5
    pool_per_layer: tuple[int, ...] | None = None
    n_highway_layers: int = 5
    mlp_units: int = 32
    dropout_rate: float = 0.2
    input_len: int = 101
    # training
    epochs: int = 30
    batch_size: int = 32
    learning_rate: float = 1e-3
    seed: int = 1
    patience: int = 5
    model_seed: int = 0
    val_frac: float = 0.2
    # extraction
    lam: float = MO.ExtractConfig.lam
    step_sizes: tuple = MO.ExtractConfig.step_sizes
    max_iters: int = MO.ExtractConfig.max_iters
    tol: float = MO.ExtractConfig.tol
    laplace_alpha: float = MO.ExtractConfig.laplace_alpha
    reg_sign: float = 1.0
    window_width: int = 8
    # synthetic data / pipeline
    n_pos: int = 500
    n_neg: int = 500
    planted_consensus: str = "TGACTCAG"
    planted: str = ""
    shuffled_negatives: bool = True
    data_seed: int = 7
    train_frac: float = 0.8
    split_seed: int = 9

    def model_config(self) -> M.ModelConfig:
        return M.ModelConfig(self.n_conv_layers, self.conv_units, self.filter_len, self.pool_per_layer,
                             self.n_highway_layers, self.mlp_units, self.dropout_rate, self.input_len)

    def train_config(self) -> M.TrainConfig:
        return M.TrainConfig(self.epochs, self.batch_size, self.learning_rate, self.seed, self.patience)

    def extract_config(self) -> MO.ExtractConfig:
        return MO.ExtractConfig(self.lam, self.step_sizes, self.max_iters, self.tol,
                                self.laplace_alpha, self.reg_sign)

    def planted_pwm(self) -> np.ndarray:
        if self.planted:
            return MO.read_pwm_file(self.planted)
        return SD.consensus_pwm(self.planted_consensus)

    def validate(self) -> None:
        self.model_config()
        self.train_config()
        self.extract_config()
        if not 0.0 < self.val_frac < 1.0 or not 0.0 < self.train_frac < 1.0:
            raise ValueError("val_frac and train_frac must be in (0, 1)")
        if self.n_pos < 1 or self.n_neg < 1:
            raise ValueError("n_pos and n_neg must be >= 1")
        if self.window_width < 1 or self.window_width > self.input_len:
            raise ValueError(f"window_width must be in [1, {self.input_len}]")
        if not self.planted and (not self.planted_consensus
                                 or set(self.planted_consensus.upper()) - set("ACGTN")):
            raise ValueError(f"bad planted_consensus {self.planted_consensus!r}")

    def set(self, key: str, raw: str) -> None:
        if key not in CONFIG_KEYS:
            raise UsageError(f"unknown config key {key!r}")
        name, parse = CONFIG_KEYS[key]
        try:
            setattr(self, name, parse(raw))
        except ValueError as exc:
            raise UsageError(f"bad value for {key}: {raw!r} ({exc})") from None


CONFIG_KEYS = {
    "n_conv_layers": ("n_conv_layers", int), "conv_units": ("conv_units", int),
    "filter_len": ("filter_len", int), "pool_per_layer": ("pool_per_layer", _pools),
    "n_highway_layers": ("n_highway_layers", int), "mlp_units": ("mlp_units", int),
    "dropout_rate": ("dropout_rate", float), "input_len": ("input_len", int),
    "epochs": ("epochs", int), "batch_size": ("batch_size", int),
    "learning_rate": ("learning_rate", float), "seed": ("seed", int), "patience": ("patience", int),
    "model_seed": ("model_seed", int), "val_frac": ("val_frac", float),
    "lambda": ("lam", float), "step_sizes": ("step_sizes", _floats), "max_iters": ("max_iters", int),
    "tol": ("tol", float), "laplace_alpha": ("laplace_alpha", float), "reg_sign": ("reg_sign", float),
    "window_width": ("window_width", int),
    "n_pos": ("n_pos", int), "n_neg": ("n_neg", int), "planted_consensus": ("planted_consensus", str),
    "planted": ("planted", str), "shuffled_negatives": ("shuffled_negatives", _bool),
    "data_seed": ("data_seed", int), "train_frac": ("train_frac", float), "split_seed": ("split_seed", int),
}


def load_config(path: str | Path | None, overrides: dict[str, str] | None = None) -> RunConfig:
    """Flat ``key = value`` file with ``#`` comments; overrides win."""
    cfg = RunConfig()
    if path is not None:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise StageError(f"cannot read config {path}: {exc}") from exc
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"config line {lineno}: expected key=value")
            key, value = (s.strip() for s in line.split("=", 1))
            cfg.set(key, value)
    for key, value in (overrides or {}).items():
        if value is not None:
            cfg.set(key, str(value))
    try:
        cfg.validate()
    except ValueError as exc:
        raise UsageError(f"invalid configuration: {exc}") from None
    return cfg


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def _require(args, *names):
    for name in names:
        if getattr(args, name.replace("-", "_")) is None:
            raise UsageError(f"missing --{name}")


def _load_data(path) -> SD.Dataset:
    try:
        return SD.parse_dataset(path)
    except OSError as exc:
        raise StageError(f"cannot read {path}: {exc}") from exc


def cmd_gen_data(args) -> None:
    _require(args, "planted", "out")
    planted = MO.read_pwm_file(args.planted)
    if args.negatives == "shuffle":
        pos = SD.generate_synthetic(args.n_pos, 1, args.length, planted, args.seed).positives()
        ds = SD.Dataset(pos + SD.shuffle_negatives(pos, args.seed + 1))
    else:
        ds = SD.generate_synthetic(args.n_pos, args.n_neg, args.length, planted, args.seed)
    SD.write_dataset(ds, args.out)
    log.info("wrote %d sequences to %s", len(ds), args.out)


def cmd_train(args) -> None:
    _require(args, "data", "out")
    rc = load_config(args.config, {"seed": args.seed})
    ds = _load_data(args.data)
    if args.val:
        train_ds, val_ds = ds, _load_data(args.val)
    else:
        train_ds, val_ds = SD.split(ds, 1.0 - rc.val_frac, rc.split_seed)
    cfg = rc.model_config()
    if ds.length != cfg.input_len:
        cfg = dataclasses.replace(cfg, input_len=ds.length)
        log.info("input_len set to %d from data", ds.length)
    params = M.build_model(cfg, rc.model_seed)
    best, hist = M.train(params, cfg, rc.train_config(), train_ds, val_ds)
    M.save_checkpoint(best, cfg, args.out)
    if hist.val_auc:
        print(f"best_val_auc={max(hist.val_auc):.4f} epochs={len(hist.val_auc)}")


def cmd_eval(args) -> None:
    _require(args, "checkpoint", "data")
    params, cfg = M.load_checkpoint(args.checkpoint)
    ds = _load_data(args.data)
    print(f"auc={M.auc(M.predict(params, cfg, ds), ds.labels):.4f}")


def cmd_motif(args) -> None:
    _require(args, "checkpoint")
    if args.out_meme is None and args.out_svg is None:
        raise UsageError("missing --out-meme or --out-svg")
    rc = load_config(args.config, {"lambda": args.lam, "max_iters": args.iters,
                                   "step_sizes": args.step_sizes, "window_width": args.width})
    params, cfg = M.load_checkpoint(args.checkpoint)
    result = MO.extract_motif(params, cfg, rc.extract_config())
    win = MO.best_window(result, rc.window_width)
    if args.out_meme:
        Path(args.out_meme).write_text(MO.emit_meme(win.pwm, args.name))
    if args.out_svg:
        MO.emit_logo_svg(win.pwm, args.out_svg)
    print(f"best_offset={win.offset} width={win.width} consensus={SD.decode_argmax(win.pwm)}")


def cmd_logo(args) -> None:
    _require(args, "meme", "out")
    MO.emit_logo_svg(MO.read_pwm_file(args.meme), args.out)


def cmd_score(args) -> None:
    _require(args, "meme-a", "meme-b", "data")
    a, b = MO.read_pwm_file(args.meme_a), MO.read_pwm_file(args.meme_b)
    ds = _load_data(args.data)
    seqs = ds.positives() if args.positives_only else list(ds)
    rep = SC.compare_on_sequences(a, b, seqs)
    if args.report:
        Path(args.report).write_text(rep.to_tsv())
    else:
        sys.stdout.write(rep.to_tsv())
    print(rep.summary_line())


def end_to_end(config_path: str | Path | None, out_dir: str | Path,
               overrides: dict[str, str] | None = None) -> dict:
    """Synthesize -> split -> train -> eval -> motif -> logo -> score."""
    rc = load_config(config_path, overrides)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stage = "gen-data"
    try:
        planted = rc.planted_pwm()
        if rc.shuffled_negatives:
            pos = SD.generate_synthetic(rc.n_pos, 1, rc.input_len, planted, rc.data_seed).positives()
            ds = SD.Dataset(pos + SD.shuffle_negatives(pos, rc.data_seed + 1))
        else:
            ds = SD.generate_synthetic(rc.n_pos, rc.n_neg, rc.input_len, planted, rc.data_seed)
        SD.write_dataset(ds, out / "data.tsv")

        stage = "split"
        train_ds, test_ds = SD.split(ds, rc.train_frac, rc.split_seed)
        SD.write_dataset(train_ds, out / "train.tsv")
        SD.write_dataset(test_ds, out / "test.tsv")

        stage = "train"
        cfg = rc.model_config()
        # model selection uses a slice of the training split; test stays untouched
        fit_ds, val_ds = SD.split(train_ds, 1.0 - rc.val_frac, rc.split_seed + 1)
        params, hist = M.train(M.build_model(cfg, rc.model_seed), cfg, rc.train_config(), fit_ds, val_ds)
        M.save_checkpoint(params, cfg, out / "model.ck")

        stage = "eval"
        test_auc = M.auc(M.predict(params, cfg, test_ds), test_ds.labels)

        stage = "motif"
        result = MO.extract_motif(params, cfg, rc.extract_config())
        win = MO.best_window(result, rc.window_width)
        (out / "motif.meme").write_text(MO.emit_meme(win.pwm, "demotif"))
        (out / "full_motif.meme").write_text(MO.emit_meme(result.full_pwm, "demotif_full"))

        stage = "logo"
        MO.emit_logo_svg(win.pwm, out / "logo.svg")

        stage = "score"
        sim_offset, similarity = SC.motif_similarity(win.pwm, planted)
        positives = test_ds.positives()
        uniform = np.full_like(win.pwm, 0.25)
        rep = SC.compare_on_sequences(win.pwm, uniform, positives)
        (out / "score.tsv").write_text(rep.to_tsv())
        vs_planted = SC.compare_on_sequences(win.pwm, planted, positives)
    except (SD.DataError, M.ModelError, MO.MotifError, SC.ScoreError, OSError) as exc:
        raise StageError(f"stage {stage} failed: {exc}") from exc

    summary = {
        "auc": round(float(test_auc), 6),
        "best_offset": win.offset,
        "best_width": win.width,
        "consensus": SD.decode_argmax(win.pwm),
        "similarity": round(float(similarity), 6),
        "similarity_offset": sim_offset,
        "win_fraction": round(rep.win_fraction, 6),
        "win_fraction_vs_planted": round(vs_planted.win_fraction, 6),
        "epochs_run": len(hist.val_auc),
        "p_positive": round(result.p_positive, 6),
        "step_size": result.step_size,
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return summary


def cmd_pipeline(args) -> None:
    _require(args, "out_dir")
    summary = end_to_end(args.config, args.out_dir, {"seed": args.seed})
    print(json.dumps(summary, sort_keys=True))


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="demotif", description="Deep convolutional/highway motif discovery on DNA.")
    p.add_argument("--version", action="store_true", help="print tool and checkpoint-format versions")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    g = sub.add_parser("gen-data", help="synthesize a planted-motif dataset")
    g.add_argument("--n-pos", type=int, default=500)
    g.add_argument("--n-neg", type=int, default=500)
    g.add_argument("--length", type=int, default=101)
    g.add_argument("--planted", help="MEME or JASPAR PFM file with the motif to plant")
    g.add_argument("--negatives", choices=("background", "shuffle"), default="background")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out")
    g.set_defaults(func=cmd_gen_data)

    t = sub.add_parser("train", help="train a classifier and write a checkpoint")
    t.add_argument("--data")
    t.add_argument("--val", help="validation TSV (default: stratified split of --data)")
    t.add_argument("--config")
    t.add_argument("--seed", type=int)
    t.add_argument("--out")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="print held-out AUC")
    e.add_argument("--checkpoint")
    e.add_argument("--data")
    e.set_defaults(func=cmd_eval)

    mo = sub.add_parser("motif", help="extract a motif by input optimization")
    mo.add_argument("--checkpoint")
    mo.add_argument("--config")
    mo.add_argument("--lambda", dest="lam", type=float)
    mo.add_argument("--iters", type=int)
    mo.add_argument("--step-sizes", help="comma-separated step sizes")
    mo.add_argument("--width", type=int)
    mo.add_argument("--name", default="demotif")
    mo.add_argument("--out-meme")
    mo.add_argument("--out-svg")
    mo.set_defaults(func=cmd_motif)

    lg = sub.add_parser("logo", help="render a PWM file as an SVG logo")
    lg.add_argument("--meme")
    lg.add_argument("--out")
    lg.set_defaults(func=cmd_logo)

    s = sub.add_parser("score", help="compare two motifs by average motif affinity")
    s.add_argument("--meme-a")
    s.add_argument("--meme-b")
    s.add_argument("--data")
    s.add_argument("--positives-only", action="store_true")
    s.add_argument("--report", help="TSV report path (default: stdout)")
    s.set_defaults(func=cmd_score)

    pl = sub.add_parser("pipeline", help="run the whole synthetic pipeline from one config")
    pl.add_argument("--config")
    pl.add_argument("--seed", type=int)
    pl.add_argument("--out-dir")
    pl.set_defaults(func=cmd_pipeline)
    return p


def run(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
        if args.version:
            print(f"demotif {__version__} checkpoint-format {M.FORMAT_VERSION}")
            return 0
        if args.command is None:
            raise UsageError("missing subcommand")
        args.func(args)
        return 0
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (StageError, SD.DataError, M.ModelError, MO.MotifError, SC.ScoreError,
            OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run())
