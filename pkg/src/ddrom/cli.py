"""Command-line pipeline: snapshots -> train -> solve / bench.

Exit codes: 0 success, 1 usage/config error, 2 numerical failure,
3 missing artifacts.
"""

from __future__ import annotations

import argparse
import os
import sys
from contextlib import contextmanager
from dataclasses import replace
from pathlib import Path

import numpy as np

from ddrom.config import WorkbenchConfig, ConfigError
from ddrom.fom import Grid, BurgersParams, build_problem, solve_fom, NonConvergenceError
from ddrom.partition import decompose
from ddrom.snapshots import (sample_parameters, generate_snapshots,
                             save_snapshots, load_snapshots)
from ddrom.autoencoder import SparseAutoencoder, TrainConfig, MaskParams, train_autoencoder
from ddrom.hyper import gaussian_test_matrix
from ddrom.rom import (assemble_rom, solve_rom, encode_state, build_ls_decoders,
                       build_samplings, count_parameters, time_fom, benchmark,
                       benchmark_csv, IdentityDecoder)
from ddrom.sqp import SqpOptions, SqpFailure
from ddrom.io import save_manifest

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NUMERICAL = 2
EXIT_MISSING = 3


class UsageError(SystemExit):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


@contextmanager
def _artifact_lock(path: Path):
    path.mkdir(parents=True, exist_ok=True)
    lock = path / ".lock"
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise SystemExit(
            f"artifact directory {path} is locked by another run "
            f"(remove {lock} if stale)")
    try:
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        yield
    finally:
        lock.unlink(missing_ok=True)


def _load_config(args) -> WorkbenchConfig:
    if args.config:
        cfg = WorkbenchConfig.from_ini(args.config)
    else:
        cfg = WorkbenchConfig()
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    cfg.validate()
    return cfg


def _setup(cfg: WorkbenchConfig):
    grid = Grid(cfg.nx, cfg.ny, cfg.x0, cfg.x1, cfg.y0, cfg.y1)
    problem = build_problem(grid, BurgersParams(cfg.test_a, cfg.test_lam, cfg.nu))
    layout = decompose(problem, cfg.n_sub_x, cfg.n_sub_y)
    return grid, problem, layout


def _train_cfg(cfg: WorkbenchConfig, seed: int) -> TrainConfig:
    return TrainConfig(epochs=cfg.epochs, batch_size=cfg.batch_size,
                       learning_rate=cfg.learning_rate, patience=cfg.patience,
                       plateau_factor=cfg.plateau_factor,
                       plateau_patience=cfg.plateau_patience,
                       min_learning_rate=cfg.min_learning_rate,
                       validation_fraction=cfg.validation_fraction, seed=seed)


def _subdomain_seed(master: int, sub: int, side: int) -> int:
    return int(np.random.SeedSequence(entropy=master,
                                      spawn_key=(sub, side)).generate_state(1)[0])


def _model_dir(adir: Path, sub: int, side: str) -> Path:
    return adir / "models" / f"sub_{sub}_{side}"


def cmd_snapshots(cfg: WorkbenchConfig, args) -> int:
    adir = cfg.artifact_dir()
    snap_dir = adir / "snapshots"
    if args.dry_run:
        print(f"plan: generate {cfg.n_a * cfg.n_lam} snapshots on a "
              f"{cfg.nx}x{cfg.ny} mesh with {cfg.n_sub_x}x{cfg.n_sub_y} subdomains "
              f"-> {snap_dir}")
        return EXIT_OK
    if (snap_dir / "manifest.txt").exists() and not args.force:
        print(f"snapshots already exist at {snap_dir} (use --force to regenerate)")
        return EXIT_OK
    grid, _, layout = _setup(cfg)
    pgrid = sample_parameters((cfg.a_min, cfg.a_max), (cfg.lam_min, cfg.lam_max),
                              cfg.n_a, cfg.n_lam)
    with _artifact_lock(adir):
        snap = generate_snapshots(grid, pgrid, layout, nu=cfg.nu)
        save_snapshots(snap, snap_dir)
        (adir / "config.ini").write_text(cfg.to_ini())
    print(f"wrote {snap.n_snapshots} snapshots to {snap_dir}"
          + (f" ({len(snap.skipped)} parameters skipped)" if snap.skipped else ""))
    return EXIT_OK


def cmd_train(cfg: WorkbenchConfig, args) -> int:
    adir = cfg.artifact_dir()
    snap_dir = adir / "snapshots"
    if not (snap_dir / "manifest.txt").exists():
        print(f"missing snapshots at {snap_dir}; run the snapshots command first",
              file=sys.stderr)
        return EXIT_MISSING
    _, _, layout = _setup(cfg)
    subs = range(layout.n_sub) if args.subdomain is None else [args.subdomain]
    if args.subdomain is not None and not 0 <= args.subdomain < layout.n_sub:
        print(f"subdomain {args.subdomain} out of range [0, {layout.n_sub})",
              file=sys.stderr)
        return EXIT_USAGE
    if args.dry_run:
        print(f"plan: train {2 * len(list(subs))} autoencoders "
              f"(latent {cfg.n_omega}/{cfg.n_gamma}) from {snap_dir}")
        return EXIT_OK
    snap = load_snapshots(snap_dir)
    hw = cfg.hidden_width or None
    mp = MaskParams(band_width=cfg.band_width, band_sep=cfg.band_sep)
    failures = 0
    with _artifact_lock(adir):
        for i in subs:
            for side, X, n in (("interior", snap.X_omega[i], cfg.n_omega),
                               ("interface", snap.X_gamma[i], cfg.n_gamma)):
                out = _model_dir(adir, i, side)
                if (out / "model.txt").exists() and not args.force:
                    print(f"subdomain {i} {side}: checkpoint exists, skipping")
                    continue
                tc = _train_cfg(cfg, _subdomain_seed(cfg.seed, i, 0 if side == "interior" else 1))
                try:
                    ae, rep = train_autoencoder(X, n, hidden_width=hw, mask_params=mp, cfg=tc)
                except Exception as exc:
                    print(f"subdomain {i} {side}: training failed: {exc}", file=sys.stderr)
                    failures += 1
                    continue
                ae.save(out)
                save_manifest(out / "training_report.txt", {
                    "best_epoch": rep.best_epoch,
                    "stopped_epoch": rep.stopped_epoch,
                    "best_validation_mse": min(rep.val_losses),
                    "final_train_mse": rep.train_losses[-1],
                    "final_learning_rate": rep.final_learning_rate,
                    "seed": tc.seed,
                })
                print(f"subdomain {i} {side}: best val MSE "
                      f"{min(rep.val_losses):.3e} (epoch {rep.best_epoch})")
    return EXIT_NUMERICAL if failures else EXIT_OK


def _load_nm_decoders(cfg: WorkbenchConfig, layout, adir: Path):
    decs = []
    missing = []
    for i in range(layout.n_sub):
        pair = []
        for side in ("interior", "interface"):
            d = _model_dir(adir, i, side)
            if not (d / "model.txt").exists():
                missing.append(str(d))
            else:
                pair.append(SparseAutoencoder.load(d))
        if len(pair) == 2:
            decs.append(tuple(pair))
    if missing:
        raise FileNotFoundError("missing model checkpoints:\n  " + "\n  ".join(missing))
    return decs


def _build_rom(cfg: WorkbenchConfig, problem, layout, snap, rom_type: str, hr: bool,
               adir: Path):
    if rom_type == "identity":
        decs = [(IdentityDecoder(len(layout.interior[i])),
                 IdentityDecoder(len(layout.interface[i])))
                for i in range(layout.n_sub)]
    elif rom_type == "ls":
        decs = build_ls_decoders(snap, layout, cfg.n_omega, cfg.n_gamma)
    elif rom_type == "nm":
        decs = _load_nm_decoders(cfg, layout, adir)
    else:
        raise ValueError(f"unknown rom type {rom_type!r}")
    samps = build_samplings(snap, layout, cfg.n_hr_nodes) if hr else None
    weak = None
    if not cfg.strong_constraints and layout.n_constraints:
        n_weak = cfg.n_weak or max(1, layout.n_constraints // 2)
        weak = gaussian_test_matrix(n_weak, layout.n_constraints, seed=cfg.seed)
    return assemble_rom(problem, layout, decs, samplings=samps, weak=weak)


def cmd_solve(cfg: WorkbenchConfig, args) -> int:
    adir = cfg.artifact_dir()
    snap_dir = adir / "snapshots"
    if args.dry_run:
        print(f"plan: solve {args.rom_type} ROM (hr={args.hr}) at "
              f"(a, lambda) = ({cfg.test_a}, {cfg.test_lam})")
        return EXIT_OK
    if not (snap_dir / "manifest.txt").exists():
        print(f"missing snapshots at {snap_dir}", file=sys.stderr)
        return EXIT_MISSING
    grid, problem, layout = _setup(cfg)
    snap = load_snapshots(snap_dir)
    try:
        rom = _build_rom(cfg, problem, layout, snap, args.rom_type, args.hr, adir)
    except FileNotFoundError as exc:
        print(exc, file=sys.stderr)
        return EXIT_MISSING
    try:
        x_ref, _ = solve_fom(problem)
        xin = snap.X[:, snap.nearest_index(cfg.test_a, cfg.test_lam)]
        opts = SqpOptions(max_iter=cfg.max_sqp_iter, kkt_tol=cfg.kkt_tol)
        _, _, rep = solve_rom(rom, x_ref, z0=encode_state(rom, xin), opts=opts)
    except (SqpFailure, NonConvergenceError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    out = adir / f"solve_{args.rom_type}{'_hr' if args.hr else ''}.csv"
    out.write_text("rom_type,hr,dof,error,iterations,rom_time,strong_violation\n"
                   f"{args.rom_type},{int(args.hr)},{rom.total_dof},{rep.error},"
                   f"{rep.iterations},{rep.rom_time},{rep.strong_violation}\n")
    print(f"{args.rom_type} ROM: relative error {rep.error:.4e}, "
          f"{rep.iterations} iterations, strong violation {rep.strong_violation:.3e}")
    print(f"report written to {out}")
    return EXIT_OK


def cmd_bench(cfg: WorkbenchConfig, args) -> int:
    adir = cfg.artifact_dir()
    snap_dir = adir / "snapshots"
    if args.dry_run:
        print("plan: benchmark ls/nm ROMs with and without HR; write "
              f"{adir / 'bench_results.csv'} and {adir / 'params_table.csv'}")
        return EXIT_OK
    if not (snap_dir / "manifest.txt").exists():
        print(f"missing snapshots at {snap_dir}", file=sys.stderr)
        return EXIT_MISSING
    grid, problem, layout = _setup(cfg)
    snap = load_snapshots(snap_dir)
    x_ref, _ = solve_fom(problem)
    xin = snap.X[:, snap.nearest_index(cfg.test_a, cfg.test_lam)]
    fom_time = time_fom(problem)

    configs = {}
    missing = []
    for rom_type in ("ls", "nm"):
        for hr in (False, True):
            label = f"{rom_type}{'_hr' if hr else ''}"
            try:
                rom = _build_rom(cfg, problem, layout, snap, rom_type, hr, adir)
            except FileNotFoundError as exc:
                missing.append(f"{label}: {exc}")
                continue
            configs[label] = {
                "rom": rom, "z0": encode_state(rom, xin),
                "opts": SqpOptions(max_iter=cfg.max_sqp_iter, kkt_tol=cfg.kkt_tol),
                "rom_type": rom_type.upper() + "-ROM",
                "n_omega": cfg.n_omega, "n_gamma": cfg.n_gamma,
                "hr": hr, "n_hr_nodes": cfg.n_hr_nodes if hr else 0,
            }
    if missing:
        print("skipping configurations with missing artifacts:", file=sys.stderr)
        for m in missing:
            print(f"  {m}", file=sys.stderr)
    try:
        rows = benchmark(configs, x_ref, fom_time)
    except (SqpFailure, NonConvergenceError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    out = adir / "bench_results.csv"
    out.write_text(benchmark_csv(rows))
    print(f"benchmark written to {out}")
    for r in rows:
        print(f"  {r['label']:8s} error {r['error']:.4e} speedup {r['speedup']:.1f} "
              f"iters {r['iterations']}")

    # parameter-count table across subdomain configurations
    mp = MaskParams(band_width=cfg.band_width, band_sep=cfg.band_sep)
    hw = cfg.hidden_width or None
    lines = ["subdomains,max_params_per_subdomain,reduction_pct,total_params"]
    base = None
    for nsx, nsy in ((1, 1), (2, 1), (2, 2), (4, 2)):
        if nsx > cfg.nx - 2 or nsy > cfg.ny - 2:
            continue
        lay = decompose(problem, nsx, nsy)
        counts = count_parameters(lay, cfg.n_omega, cfg.n_gamma, hidden_width=hw,
                                  mask_params=mp)
        if base is None:
            base = counts["max"]
        red = 100.0 * (1.0 - counts["max"] / base)
        lines.append(f"{nsx}x{nsy},{counts['max']},{red:.1f},{counts['total']}")
    out2 = adir / "params_table.csv"
    out2.write_text("\n".join(lines) + "\n")
    print(f"parameter-count table written to {out2}")
    return EXIT_NUMERICAL if missing else EXIT_OK


def cmd_print_defaults(cfg: WorkbenchConfig, args) -> int:
    print(WorkbenchConfig().to_ini(), end="")
    return EXIT_OK


def main(argv=None) -> int:
    parser = _Parser(prog="ddrom", description=__doc__)
    parser.add_argument("--config", help="path to an INI config file")
    parser.add_argument("--seed", type=int, help="override the master seed")
    parser.add_argument("--force", action="store_true",
                        help="recompute artifacts that already exist")
    parser.add_argument("--dry-run", action="store_true",
                        help="validate config and print the plan, no side effects")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("snapshots", help="generate and store FOM snapshots")
    p_train = sub.add_parser("train", help="train subdomain autoencoders")
    p_train.add_argument("--subdomain", type=int, help="train only this subdomain")
    p_solve = sub.add_parser("solve", help="solve one ROM at the test parameter")
    p_solve.add_argument("rom_type", choices=["ls", "nm", "identity"])
    p_solve.add_argument("--hr", action="store_true", help="enable hyper-reduction")
    sub.add_parser("bench", help="run the error/speedup benchmark table")
    sub.add_parser("print-defaults", help="print the default configuration")

    args = parser.parse_args(argv)
    if not hasattr(args, "subdomain"):
        args.subdomain = None
    try:
        cfg = _load_config(args)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    handlers = {"snapshots": cmd_snapshots, "train": cmd_train, "solve": cmd_solve,
                "bench": cmd_bench, "print-defaults": cmd_print_defaults}
    return handlers[args.command](cfg, args)


if __name__ == "__main__":
    sys.exit(main())
