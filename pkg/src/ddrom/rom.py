"""Assembly and evaluation of DD reduced-order models.

A ROM instance wires per-subdomain decoders (linear POD or sparse-autoencoder)
into the constrained least-squares structure: sampled subdomain residual rows
as the objective blocks and (optionally Gaussian-compressed) interface
compatibility constraints.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from ddrom.fom import FomProblem, solve_fom
from ddrom.partition import DDLayout
from ddrom.pod import pod, LinearDecoder
from ddrom.autoencoder import (SparseAutoencoder, TrainConfig, MaskParams,
                               train_autoencoder, build_mask)
from ddrom.hyper import SamplingMatrix, WeakConstraintMatrix, greedy_sample
from ddrom.sqp import Block, SqpOptions, solve_constrained_lsq


class IdentityDecoder:
    """g = identity; turns the ROM into the DD FOM (reduction disabled)."""

    def __init__(self, n: int):
        self.latent_dim = n
        self.output_dim = n

    def decode(self, z):
        return np.asarray(z, dtype=float)

    def encode(self, x):
        return np.asarray(x, dtype=float)

    def jacobian(self, z):
        return np.eye(self.latent_dim)

    def restricted(self, rows):
        rows = np.asarray(rows, dtype=np.intp)
        basis = np.zeros((rows.shape[0], self.latent_dim))
        basis[np.arange(rows.shape[0]), rows] = 1.0
        return LinearDecoder(basis)

    def parameter_count(self):
        return 0


@dataclass
class SubdomainRom:
    dec_interior: object
    dec_interface: object
    sampling: SamplingMatrix | None = None


@dataclass
class RomInstance:
    problem: FomProblem
    layout: DDLayout
    subs: list
    weak: WeakConstraintMatrix | None = None  # None means strong constraints

    @property
    def latent_dims(self):
        return [(s.dec_interior.latent_dim, s.dec_interface.latent_dim) for s in self.subs]

    @property
    def total_dof(self):
        return sum(no + ng for no, ng in self.latent_dims)


@dataclass
class EvalReport:
    error: float
    iterations: int
    rom_time: float          # max-over-subdomains timing convention
    rom_serial_time: float
    fom_time: float | None = None
    objective: float = 0.0
    strong_violation: float = 0.0

    @property
    def speedup(self):
        return None if self.fom_time is None else self.fom_time / self.rom_time


def assemble_rom(problem: FomProblem, layout: DDLayout, decoders,
                 samplings=None, weak: WeakConstraintMatrix | None = None) -> RomInstance:
    """Bundle decoders and sampling into a solvable ROM.

    ``decoders`` is a list of (interior_decoder, interface_decoder) pairs per
    subdomain; ``samplings`` an optional list of SamplingMatrix (local row
    indices into each subdomain's residual rows).
    """
    if len(decoders) != layout.n_sub:
        raise ValueError("need one decoder pair per subdomain")
    subs = []
    for i, (do, dg) in enumerate(decoders):
        if do.output_dim != len(layout.interior[i]):
            raise ValueError(f"subdomain {i}: interior decoder output dim "
                             f"{do.output_dim} != {len(layout.interior[i])}")
        if dg.output_dim != len(layout.interface[i]):
            raise ValueError(f"subdomain {i}: interface decoder output dim "
                             f"{dg.output_dim} != {len(layout.interface[i])}")
        samp = None
        if samplings is not None:
            samp = samplings[i]
            if samp.n_samples < do.latent_dim + dg.latent_dim:
                raise ValueError(f"subdomain {i}: {samp.n_samples} HR rows < "
                                 f"{do.latent_dim + dg.latent_dim} latent unknowns")
        subs.append(SubdomainRom(do, dg, samp))
    if weak is not None and weak.matrix.shape[1] != layout.n_constraints:
        raise ValueError("weak-constraint matrix column count != number of constraints")
    return RomInstance(problem, layout, subs, weak)


def _build_blocks(rom: RomInstance):
    """SQP blocks: latent unknowns z_i = (z_i_interior, z_i_interface)."""
    problem, layout = rom.problem, rom.layout
    cm = layout.constraints
    n_con = layout.n_constraints
    blocks = []
    for i, sub in enumerate(rom.subs):
        interior, interface = layout.interior[i], layout.interface[i]
        rows = layout.rows[i] if sub.sampling is None else layout.rows[i][sub.sampling.rows]
        support = problem.row_support(rows)
        sup_o = support[np.isin(support, interior)]
        sup_g = support[np.isin(support, interface)]
        pos_o = np.searchsorted(interior, sup_o)   # local positions inside interior set
        pos_g = np.searchsorted(interface, sup_g)
        if sub.sampling is None:
            dec_o, dec_g = sub.dec_interior, sub.dec_interface
        else:
            dec_o = sub.dec_interior.restricted(pos_o)
            dec_g = sub.dec_interface.restricted(pos_g)
        no, ng = sub.dec_interior.latent_dim, sub.dec_interface.latent_dim

        if n_con:
            CA = cm.mats[i] if rom.weak is None else rom.weak.matrix @ cm.mats[i]

        def residual_fn(z, i=i, rows=rows, sup_o=sup_o, sup_g=sup_g,
                        dec_o=dec_o, dec_g=dec_g, no=no):
            buf = np.zeros(problem.n_dof)
            buf[sup_o] = dec_o.decode(z[:no])
            buf[sup_g] = dec_g.decode(z[no:])
            r = problem.residual_rows(buf, rows)
            J = problem.jacobian_rows(buf, rows)
            Jo = J[:, sup_o] @ dec_o.jacobian(z[:no])
            Jg = J[:, sup_g] @ dec_g.jacobian(z[no:])
            return r, np.hstack([np.asarray(Jo), np.asarray(Jg)])

        constraint_fn = None
        if n_con:
            def constraint_fn(z, i=i, CA=CA, no=no, ng=ng, sub=sub):
                xg = sub.dec_interface.decode(z[no:])
                Jg = CA @ sub.dec_interface.jacobian(z[no:])
                G = np.hstack([np.zeros((Jg.shape[0], no)), np.asarray(Jg)])
                return np.asarray(CA @ xg).ravel(), G

        blocks.append(Block(dim=no + ng, residual_fn=residual_fn, constraint_fn=constraint_fn))
    n_total_con = (rom.weak.n_rows if rom.weak is not None else n_con) if n_con else 0
    return blocks, n_total_con


def relative_error(fom_state: np.ndarray, decoded_pairs, layout: DDLayout) -> float:
    """RMS over subdomains of the squared state mismatch over the squared norm."""
    terms = []
    for i, (xo_hat, xg_hat) in enumerate(decoded_pairs):
        xo = fom_state[layout.interior[i]]
        xg = fom_state[layout.interface[i]]
        num = np.sum((xo - xo_hat) ** 2) + np.sum((xg - xg_hat) ** 2)
        den = np.sum(xo ** 2) + np.sum(xg ** 2)
        if den == 0:
            raise ZeroDivisionError(f"subdomain {i} reference state has zero norm")
        terms.append(num / den)
    return float(np.sqrt(np.mean(terms)))


def solve_rom(rom: RomInstance, fom_state: np.ndarray,
              z0: list | None = None, opts: SqpOptions | None = None):
    """Solve the reduced system and report the error against ``fom_state``.

    The default initial guess encodes the reference FOM state itself; callers
    doing genuine prediction should pass ``z0`` encoded from a training
    snapshot instead.
    """
    layout = rom.layout
    if z0 is None:
        z0 = encode_state(rom, fom_state)
    if opts is None:
        opts = SqpOptions(max_iter=80)
    blocks, n_con = _build_blocks(rom)
    result = solve_constrained_lsq(blocks, n_con, z0, opts=opts)

    decoded = []
    for i, sub in enumerate(rom.subs):
        z = result.x_blocks[i]
        no = sub.dec_interior.latent_dim
        decoded.append((sub.dec_interior.decode(z[:no]), sub.dec_interface.decode(z[no:])))
    err = relative_error(fom_state, decoded, layout)

    cm = layout.constraints
    strong = 0.0
    if layout.n_constraints:
        s = np.zeros(layout.n_constraints)
        for i, (_, xg_hat) in enumerate(decoded):
            s += cm.mats[i] @ xg_hat
        strong = float(np.max(np.abs(s)))
    report = EvalReport(error=err, iterations=result.iterations,
                        rom_time=result.parallel_time, rom_serial_time=result.serial_time,
                        objective=result.objective, strong_violation=strong)
    return result.x_blocks, decoded, report


def encode_state(rom: RomInstance, x: np.ndarray) -> list:
    """Per-subdomain latent encoding of a monolithic state."""
    z0 = []
    for i, sub in enumerate(rom.subs):
        xo = x[rom.layout.interior[i]]
        xg = x[rom.layout.interface[i]]
        z0.append(np.concatenate([sub.dec_interior.encode(xo), sub.dec_interface.encode(xg)]))
    return z0


# -- decoder construction helpers -------------------------------------------

def build_ls_decoders(snapshot_set, layout: DDLayout, n_omega: int, n_gamma: int):
    """POD bases per subdomain, used as linear decoder/encoder pairs."""
    decs = []
    for i in range(layout.n_sub):
        po = pod(snapshot_set.X_omega[i], n_omega)
        pg = pod(snapshot_set.X_gamma[i], n_gamma)
        decs.append((LinearDecoder.from_pod(po), LinearDecoder.from_pod(pg)))
    return decs


def train_nm_decoders(snapshot_set, layout: DDLayout, n_omega: int, n_gamma: int,
                      hidden_width=None, mask_params: MaskParams = MaskParams(),
                      cfg: TrainConfig = TrainConfig(), master_seed: int = 0):
    """Train interior+interface autoencoders for every subdomain.

    RNG streams derive from (master_seed, subdomain, side) so subdomains are
    independent and the whole set is reproducible.
    """
    from dataclasses import replace
    decs, reports = [], []
    for i in range(layout.n_sub):
        cfg_o = replace(cfg, seed=int(np.random.SeedSequence(
            entropy=master_seed, spawn_key=(i, 0)).generate_state(1)[0]))
        cfg_g = replace(cfg, seed=int(np.random.SeedSequence(
            entropy=master_seed, spawn_key=(i, 1)).generate_state(1)[0]))
        ae_o, rep_o = train_autoencoder(snapshot_set.X_omega[i], n_omega,
                                        hidden_width=hidden_width,
                                        mask_params=mask_params, cfg=cfg_o)
        ae_g, rep_g = train_autoencoder(snapshot_set.X_gamma[i], n_gamma,
                                        hidden_width=hidden_width,
                                        mask_params=mask_params, cfg=cfg_g)
        decs.append((ae_o, ae_g))
        reports.append((rep_o, rep_g))
    return decs, reports


def build_samplings(snapshot_set, layout: DDLayout, n_samples: int):
    """Greedy HR sampling per subdomain from residual-snapshot POD bases."""
    samps = []
    for i in range(layout.n_sub):
        R = snapshot_set.R[i]
        sv = np.linalg.svd(R, compute_uv=False)
        # same numerical-rank rule as the Gram-matrix path inside pod()
        rank = int(np.sum(sv > sv[0] * np.sqrt(max(R.shape) * np.finfo(float).eps)))
        k = max(1, min((n_samples + 1) // 2, rank))
        basis = pod(R, k).basis
        samps.append(greedy_sample(basis, min(n_samples, R.shape[0]), subdomain=i))
    return samps


# -- parameter counting ------------------------------------------------------

def autoencoder_parameter_count(n_features: int, latent_dim: int,
                                hidden_width=None,
                                mask_params: MaskParams = MaskParams()) -> int:
    """Trainable-parameter count of one autoencoder without building weights."""
    if n_features == 0:
        return 0
    H = hidden_width if hidden_width is not None else min(2 * n_features, 4096)
    sep = mask_params.band_sep if mask_params.band_sep > 0 else max(
        1, int(round(np.sqrt(n_features))))
    nnz = int(build_mask(n_features, H, mask_params.band_width, sep).sum())
    return 2 * nnz + 2 * H + 2 * (latent_dim * H) + latent_dim + n_features


def count_parameters(layout: DDLayout, n_omega: int, n_gamma: int,
                     hidden_width=None, mask_params: MaskParams = MaskParams()):
    """Per-subdomain and total NN parameter counts for a DD NM-ROM architecture.

    For a single-subdomain layout (no interface) the latent size is
    n_omega + n_gamma, keeping the DoF-per-subdomain comparable.
    """
    per_sub = []
    for i in range(layout.n_sub):
        N_o, N_g = len(layout.interior[i]), len(layout.interface[i])
        if N_g == 0:
            cnt = autoencoder_parameter_count(N_o, n_omega + n_gamma, hidden_width, mask_params)
        else:
            cnt = (autoencoder_parameter_count(N_o, n_omega, hidden_width, mask_params)
                   + autoencoder_parameter_count(N_g, n_gamma, hidden_width, mask_params))
        per_sub.append(cnt)
    return {"per_subdomain": per_sub, "max": max(per_sub), "total": sum(per_sub)}


# -- benchmarking ------------------------------------------------------------

def time_fom(problem: FomProblem, repeats: int = 3) -> float:
    """Median wall time of the monolithic Newton solve."""
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        solve_fom(problem)
        times.append(time.perf_counter() - t0)
    return float(np.median(times))


def benchmark(rom_configs, fom_state, fom_time: float, repeats: int = 3):
    """Run each named ROM configuration and collect a results table.

    ``rom_configs`` maps a label to a dict with keys ``rom`` (RomInstance),
    ``z0`` (initial latent guess), optional ``opts``, and descriptive fields
    ``rom_type``, ``n_omega``, ``n_gamma``, ``hr``, ``n_hr_nodes``.
    """
    rows = []
    for label, cfg in rom_configs.items():
        reports = []
        for _ in range(repeats):
            _, _, rep = solve_rom(cfg["rom"], fom_state, z0=cfg.get("z0"),
                                  opts=cfg.get("opts"))
            reports.append(rep)
        times = sorted(r.rom_time for r in reports)
        rep = reports[0]
        rom_time = times[len(times) // 2]
        rows.append({
            "label": label,
            "rom_type": cfg.get("rom_type", "?"),
            "n_omega": cfg.get("n_omega", 0),
            "n_gamma": cfg.get("n_gamma", 0),
            "dof": cfg["rom"].total_dof,
            "hr": int(cfg.get("hr", False)),
            "n_hr_nodes": cfg.get("n_hr_nodes", 0),
            "error": rep.error,
            "speedup": fom_time / rom_time,
            "iterations": rep.iterations,
            "rom_time": rom_time,
        })
    return rows


def benchmark_csv(rows) -> str:
    cols = ["rom_type", "n_omega", "n_gamma", "dof", "hr", "n_hr_nodes",
            "error", "speedup", "iterations"]
    lines = [",".join(cols)]
    for r in rows:
        lines.append(",".join(str(r[c]) for c in cols))
    return "\n".join(lines) + "\n"
