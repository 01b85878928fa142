# -*- coding: utf-8 -*-
"""
Command-line front end.

    mvcons gen-data | train-source | adapt | eval | embed | metrics | plot | gradcheck | sweep

Every subcommand accepts ``--config FILE``, ``--preset NAME`` and dotted overrides
such as ``--train.lambda 0.5``, and records what it did in ``run.json`` next to its
outputs. Exit codes: 0 success, 2 configuration/usage error, 1 any other failure.
"""

import argparse
import csv
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

from . import analysis, tsne
from .checkpoint import load_checkpoint, save_checkpoint
from .config import (DEFAULT_PRESET, PRESETS, ExperimentConfig, load_config, parse_override_value,
                     write_run_json)
from .data import DatasetSplit, DomainShift, SynthSpec, generate_synthetic, load_image_folder
from .errors import ConfigurationError, MvconsError
from .gradcheck import PASS_THRESHOLD, run_gradient_suite
from .model import Model
from .plot import scatter_svg
from .training import adapt_target, train_source, write_log_csv

logger = logging.getLogger(__name__)

# --- Constants ---
EXIT_OK = 0
EXIT_RUNTIME_ERROR = 1
EXIT_CONFIG_ERROR = 2
LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"
DEFAULT_SWEEP_LAMBDAS = "0.1,0.5,1.0,10.0"
SWEEP_COLUMNS = ("lambda", "l_class", "l_cons", "mean_pair_dist", "accuracy")


class OverrideError(ConfigurationError):
    """A trailing command-line token is not a ``--section.field value`` pair."""


def split_overrides(tokens: Sequence[str]) -> List[Tuple[str, object]]:
    """``--a.b 1 --c.d=x`` -> [("a.b", 1), ("c.d", "x")]."""
    pairs, i = [], 0
    while i < len(tokens):
        token = tokens[i]
        if not token.startswith("--") or "." not in token.split("=", 1)[0]:
            raise OverrideError(f"Unrecognized argument {token!r}")
        key = token[2:]
        if "=" in key:
            key, value = key.split("=", 1)
            i += 1
        else:
            if i + 1 >= len(tokens):
                raise OverrideError(f"Override {token} needs a value")
            value = tokens[i + 1]
            i += 2
        pairs.append((key, parse_override_value(value)))
    return pairs


def _existing_dir(path: str) -> Path:
    p = Path(path)
    if not p.is_dir():
        raise FileNotFoundError(f"Directory not found: {p}")
    return p


def _log_path(out: Path, explicit: Optional[str]) -> Path:
    return Path(explicit) if explicit else out.with_suffix(".log.csv")


# --- Runner ---
class ExperimentRunner:
    """Executes one parsed subcommand and records it in run.json."""

    def __init__(self, args: argparse.Namespace, overrides: List[Tuple[str, object]], argv: List[str]):
        self.args = args
        self.overrides = overrides
        self.argv = argv

    def run(self) -> int:
        handler = getattr(self, "cmd_" + self.args.command.replace("-", "_"))
        return handler()

    # --- Helpers ---
    def _config(self) -> ExperimentConfig:
        return load_config(self.args.config, self.args.preset, self.overrides)

    def _config_for_model(self, model: Model) -> ExperimentConfig:
        """Resolved config whose model section is taken from a checkpoint."""
        overrides = [(k, v) for k, v in self.overrides if not k.startswith("model.")]
        overrides += [(f"model.{k}", v) for k, v in model.config.to_dict().items()]
        return load_config(self.args.config, self.args.preset, overrides)

    def _record(self, out_dir: Path, config: Optional[ExperimentConfig], inputs: dict, outputs: dict,
                seeds: Optional[dict] = None, result: Optional[dict] = None, key: Optional[str] = None) -> None:
        """Write this invocation to run.json, keyed by its first output (or ``key``)."""
        record = {
            "argv": list(self.argv),
            "config": config.to_dict() if config else None,
            "seeds": seeds or {},
            "inputs": {k: str(v) for k, v in inputs.items()},
            "outputs": {k: str(v) for k, v in outputs.items()},
        }
        if result is not None:
            record["result"] = result
        if key is None:
            key = str(next(iter(outputs.values()))) if outputs else "-"
        write_run_json(out_dir, self.args.command, record, key)

    def _load_split(self, path: str, image_size: int) -> DatasetSplit:
        return load_image_folder(_existing_dir(path), image_size)

    # --- Subcommands ---
    def cmd_gen_data(self) -> int:
        config = self._config()
        a = self.args
        synth = config.synth
        spec = SynthSpec(
            num_classes=a.classes if a.classes is not None else synth.num_classes,
            per_class=a.per_class if a.per_class is not None else synth.per_class,
            image_size=a.image_size if a.image_size is not None else synth.image_size,
            domain_shift=DomainShift(**vars(synth.domain_shift)),
            seed=a.seed if a.seed is not None else synth.seed,
        ).validate()
        config.synth = spec
        out = Path(a.out)
        source, target = generate_synthetic(spec, out)
        self._record(out, config, {}, {"dataset": out}, {"synth": spec.seed})
        print(f"Generated {len(source)} source and {len(target)} target images in {out}")
        return EXIT_OK

    def cmd_train_source(self) -> int:
        config = self._config()
        split = self._load_split(self.args.data, config.model.image_size)
        if len(split.classes) != config.model.num_classes:
            raise ConfigurationError(f"{self.args.data} has {len(split.classes)} classes but "
                                     f"model.num_classes is {config.model.num_classes}")
        model = Model.create(config.model, seed=config.train.seed)
        trained, logs = train_source(model, split, config.train)
        out = Path(self.args.out)
        save_checkpoint(trained, out)
        log_path = write_log_csv(logs, _log_path(out, self.args.log))
        self._record(out.parent, config, {"data": self.args.data}, {"checkpoint": out, "log": log_path},
                     {"init": config.train.seed, "train": config.train.seed})
        final = f"{logs[-1].accuracy:.4f}" if logs else "n/a"
        print(f"Trained {len(logs)} epochs on {len(split)} images; final training accuracy {final}")
        return EXIT_OK

    def cmd_adapt(self) -> int:
        model = load_checkpoint(self.args.ckpt)
        config = self._config_for_model(model)
        split = self._load_split(self.args.data, model.config.image_size)
        adapted, logs = adapt_target(model, split, config.train, config.augment)
        out = Path(self.args.out)
        save_checkpoint(adapted, out)
        log_path = write_log_csv(logs, _log_path(out, self.args.log))
        self._record(out.parent, config, {"checkpoint": self.args.ckpt, "data": self.args.data},
                     {"checkpoint": out, "log": log_path}, {"train": config.train.seed})
        if logs:
            print(f"Adapted {len(logs)} epochs on {len(split)} target images; "
                  f"pair distance {logs[0].mean_pair_dist:.4f} -> {logs[-1].mean_pair_dist:.4f}")
        return EXIT_OK

    def cmd_eval(self) -> int:
        model = load_checkpoint(self.args.ckpt)
        split = self._load_split(self.args.data, model.config.image_size)
        acc = analysis.accuracy(model, split)
        result = {"accuracy": acc, "domain": split.domain, "n_samples": len(split)}
        inputs = {"checkpoint": self.args.ckpt, "data": self.args.data}
        if self.args.out:
            out = Path(self.args.out)
            out.parent.mkdir(parents=True, exist_ok=True)
            out.write_text(json.dumps(result, indent=2, sort_keys=True) + "\n")
            self._record(out.parent, None, inputs, {"report": out}, result=result)
        else:
            # no report file: record next to the checkpoint, one entry per evaluated dataset
            self._record(Path(self.args.ckpt).parent, None, inputs, {}, result=result,
                         key=str(Path(self.args.data)))
        print(f"accuracy {acc:.4f} on {len(split)} {split.domain} images")
        return EXIT_OK

    def cmd_embed(self) -> int:
        a = self.args
        if a.raw:
            image_size = a.image_size
            sets = [analysis.raw_embedding(self._load_split(d, image_size)) for d in a.data]
        else:
            if not a.ckpt:
                raise ConfigurationError("embed needs --ckpt unless --raw is given")
            model = load_checkpoint(a.ckpt)
            sets = [analysis.embed(model, self._load_split(d, model.config.image_size)) for d in a.data]
        emb = analysis.EmbeddingSet.concat(sets)
        out = Path(a.out)
        outputs = {"embeddings": analysis.write_embeddings_csv(emb, out)}
        seeds = {}
        if a.tsne:
            perplexity = tsne.clamp_perplexity(a.perplexity, len(emb))
            result = tsne.tsne(emb, perplexity=perplexity, iterations=a.iterations, seed=a.seed)
            outputs["tsne"] = tsne.write_tsne_csv(emb, result, a.tsne)
            seeds["tsne"] = a.seed
            print(f"t-SNE KL {result.kl_initial:.4f} -> {result.kl_final:.4f}")
        inputs = {f"data{k}": d for k, d in enumerate(a.data)}
        if a.ckpt and not a.raw:
            inputs["checkpoint"] = a.ckpt
        self._record(out.parent, None, inputs, outputs, seeds)
        print(f"Wrote {len(emb)} embeddings ({emb.vectors.shape[1]} dims) to {out}")
        return EXIT_OK

    def cmd_metrics(self) -> int:
        emb = analysis.read_embeddings_csv(self.args.embeddings)
        report = analysis.metrics_report(emb)
        out = Path(self.args.out)
        report.write_json(out)
        self._record(out.parent, None, {"embeddings": self.args.embeddings}, {"metrics": out})
        print(f"silhouette {report.silhouette:.4f}  dbi {report.dbi:.4f}  chi {report.chi:.4f}")
        return EXIT_OK

    def cmd_plot(self) -> int:
        emb = analysis.read_embeddings_csv(self.args.points)
        out = scatter_svg(emb, self.args.out, title=self.args.title or "")
        self._record(out.parent, None, {"points": self.args.points}, {"svg": out})
        print(f"Plotted {len(emb)} points to {out}")
        return EXIT_OK

    def cmd_gradcheck(self) -> int:
        results = run_gradient_suite(seed=self.args.seed)
        width = max(len(r.name) for r in results)
        for r in results:
            status = "ok" if r.passed else "FAIL"
            print(f"{r.name:<{width}}  max_rel_err={r.max_rel_error:.3e}  {r.seconds:6.2f}s  {status}")
        failed = [r.name for r in results if not r.passed]
        if failed:
            logger.error("Gradient check above %.0e for: %s", PASS_THRESHOLD, ", ".join(failed))
            return EXIT_RUNTIME_ERROR
        return EXIT_OK

    def cmd_sweep(self) -> int:
        try:
            lambdas = [float(v) for v in self.args.lambdas.split(",") if v.strip()]
        except ValueError as exc:
            raise ConfigurationError(f"--lambdas must be comma-separated numbers: {exc}") from exc
        if not lambdas:
            raise ConfigurationError("--lambdas is empty")
        model = load_checkpoint(self.args.ckpt)
        split = self._load_split(self.args.data, model.config.image_size)
        out_dir = Path(self.args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        rows, outputs = [], {}
        for lam in lambdas:
            config = self._config_for_model(model)
            config.train.lambda_ = lam
            config.train.validate()
            adapted, logs = adapt_target(model, split, config.train, config.augment)
            ckpt = save_checkpoint(adapted, out_dir / f"lambda_{lam:g}.ckpt")
            outputs[f"checkpoint_{lam:g}"] = ckpt
            last = logs[-1] if logs else None
            acc = analysis.accuracy(adapted, split) if split.has_labels else None
            rows.append([repr(lam)] + [
                "" if v is None else repr(float(v))
                for v in (last and last.l_class, last and last.l_cons, last and last.mean_pair_dist, acc)])
            logger.info("sweep lambda=%g done", lam)
        sweep_csv = out_dir / "sweep.csv"
        with open(sweep_csv, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(SWEEP_COLUMNS)
            writer.writerows(rows)
        outputs["sweep"] = sweep_csv
        self._record(out_dir, self._config_for_model(model),
                     {"checkpoint": self.args.ckpt, "data": self.args.data}, outputs)
        print(f"Swept {len(lambdas)} lambda values; results in {sweep_csv}")
        return EXIT_OK


# --- Argument parsing ---
def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--verbose", action="store_true", help="log at DEBUG level")
    common.add_argument("--quiet", action="store_true", help="log warnings and errors only")
    common.add_argument("--config", help="JSON experiment config file")
    common.add_argument("--preset", default=DEFAULT_PRESET, choices=sorted(PRESETS),
                        help=f"hyperparameter preset (default {DEFAULT_PRESET})")

    parser = argparse.ArgumentParser(
        prog="mvcons",
        description="Source-free domain adaptation by multiview latent consistency. "
                    "Dotted overrides such as --train.lambda 0.5 are accepted by every subcommand.")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    p = sub.add_parser("gen-data", parents=[common], help="render the synthetic two-domain dataset")
    p.add_argument("--out", required=True, help="dataset root directory")
    p.add_argument("--classes", type=int, help="number of classes")
    p.add_argument("--per-class", type=int, help="images per class and domain")
    p.add_argument("--image-size", type=int, help="image side in pixels")
    p.add_argument("--seed", type=int, help="generator seed")

    p = sub.add_parser("train-source", parents=[common], help="train on a labeled source split")
    p.add_argument("--data", required=True, help="source split directory (<class>/<image>.png)")
    p.add_argument("--out", required=True, help="output checkpoint path")
    p.add_argument("--log", help="per-epoch CSV log (default: <out>.log.csv)")

    p = sub.add_parser("adapt", parents=[common], help="source-free adaptation on target images")
    p.add_argument("--ckpt", required=True, help="source-trained checkpoint")
    p.add_argument("--data", required=True, help="target split directory")
    p.add_argument("--out", required=True, help="adapted checkpoint path")
    p.add_argument("--log", help="per-epoch CSV log (default: <out>.log.csv)")

    p = sub.add_parser("eval", parents=[common], help="top-1 accuracy on a labeled split")
    p.add_argument("--ckpt", required=True, help="checkpoint to evaluate")
    p.add_argument("--data", required=True, help="labeled split directory")
    p.add_argument("--out", help="accuracy JSON path")

    p = sub.add_parser("embed", parents=[common], help="latent (or raw pixel) embeddings CSV")
    p.add_argument("--data", required=True, nargs="+", help="one or more split directories")
    p.add_argument("--out", required=True, help="embeddings CSV path")
    p.add_argument("--ckpt", help="checkpoint (not needed with --raw)")
    p.add_argument("--raw", action="store_true", help="embed flattened pixels instead of latents")
    p.add_argument("--image-size", type=int, default=32, help="image side for --raw (default 32)")
    p.add_argument("--tsne", help="also write a 2-D t-SNE CSV to this path")
    p.add_argument("--perplexity", type=float, default=tsne.DEFAULT_PERPLEXITY,
                   help="t-SNE perplexity, clamped to (N-1)/3 (default 30)")
    p.add_argument("--iterations", type=int, default=tsne.DEFAULT_ITERATIONS, help="t-SNE iterations")
    p.add_argument("--seed", type=int, default=0, help="t-SNE initialisation seed")

    p = sub.add_parser("metrics", parents=[common], help="silhouette, Davies-Bouldin, Calinski-Harabasz")
    p.add_argument("--embeddings", required=True, help="embeddings CSV")
    p.add_argument("--out", required=True, help="metrics JSON path")

    p = sub.add_parser("plot", parents=[common], help="SVG scatter of a 2-D CSV")
    p.add_argument("--points", required=True, help="t-SNE CSV (id,label,domain,y0,y1,...)")
    p.add_argument("--out", required=True, help="SVG path")
    p.add_argument("--title", help="plot title")

    p = sub.add_parser("gradcheck", parents=[common], help="finite-difference gradient suite")
    p.add_argument("--seed", type=int, default=0, help="seed for random inputs")

    p = sub.add_parser("sweep", parents=[common], help="adapt one checkpoint for several lambda values")
    p.add_argument("--ckpt", required=True, help="source-trained checkpoint")
    p.add_argument("--data", required=True, help="target split directory")
    p.add_argument("--out", required=True, help="output directory for sweep.csv and checkpoints")
    p.add_argument("--lambdas", default=DEFAULT_SWEEP_LAMBDAS,
                   help=f"comma-separated lambda values (default {DEFAULT_SWEEP_LAMBDAS})")
    return parser


def configure_logging(verbose: bool, quiet: bool) -> None:
    level = logging.DEBUG if verbose else logging.WARNING if quiet else logging.INFO
    logging.basicConfig(level=level, format=LOG_FORMAT, stream=sys.stderr, force=True)


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args, extra = parser.parse_known_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_CONFIG_ERROR
    configure_logging(args.verbose, args.quiet)
    try:
        overrides = split_overrides(extra)
        return ExperimentRunner(args, overrides, argv).run()
    except ConfigurationError as exc:
        logger.error("Configuration error: %s", exc)
        return EXIT_CONFIG_ERROR
    except (MvconsError, OSError) as exc:
        logger.error("%s", exc)
        return EXIT_RUNTIME_ERROR
    except KeyboardInterrupt:
        logger.warning("Interrupted")
        return EXIT_RUNTIME_ERROR
