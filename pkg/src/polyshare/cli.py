"""Command-line surface: activation benchmarks, truncation failure rates,
secure inference over saved models, polynomial fitting, and per-model
round/byte tables.

Tabular output is CSV with a fixed column order, documented in each
subcommand's help text, so results pipe straight into plotting tools.
Timing columns (mean_s, ci95_s, wall_s) are measured and therefore vary
run to run; every other column is recomputed deterministically from the
seed and flags.
"""

from __future__ import annotations

import csv
import time
from pathlib import Path

import click
import numpy as np

from . import ring
from .engine import (ModelFormatError, load_model, predict_model_cost,
                     secure_infer, setup_inference)
from .fitting import FittingError, fit_quantized, max_error
from .protocols import espn_poly, hb_poly, relu_binary, sqmul_poly
from .ring import DEFAULT_CONFIG, to_signed, to_unsigned
from .sharing import Role, Session, Share, TrustedDealer, run_session_pair
from .transport import NetworkConfig, connect_socket, serve_socket

_U64 = np.uint64
_PROTOCOL_CHOICES = ("espn", "honeybadger", "hb", "sqmul", "binary-relu")

seed_option = click.option(
    "--seed", type=int, default=0, show_default=True,
    envvar="POLYSHARE_SEED",
    help="Deterministic seed (env POLYSHARE_SEED is the fallback).")
output_option = click.option(
    "--output", "-o", type=click.File("w"), default="-",
    help="Destination file for the CSV (default stdout).")


@click.group()
def main():
    """Two-party secure inference toolkit."""


def _writer(stream):
    # \n terminator so output files are byte-stable across platforms
    return csv.writer(stream, lineterminator="\n")


def _activation_party(protocol: str, coeffs, fit_precision: int,
                      share_vals, scale: int):
    def party(session: Session):
        x = Share(share_vals[int(session.role)], session.role, scale)
        if protocol == "binary-relu":
            relu_binary(session, x)
        elif protocol == "espn":
            espn_poly(session, x, coeffs, fit_precision)
        elif protocol in ("honeybadger", "hb"):
            hb_poly(session, x, coeffs, fit_precision)
        else:
            sqmul_poly(session, x, coeffs, fit_precision)
    return party


@main.command()
@click.option("--protocol", "protocols", multiple=True,
              type=click.Choice(_PROTOCOL_CHOICES), default=("espn",),
              show_default=True, help="Repeatable; one CSV row group each.")
@click.option("--batch", type=int, default=4096, show_default=True,
              help="Activations evaluated per run.")
@click.option("--delay-ms", "delays", multiple=True, type=float,
              default=(0.0,), show_default=True,
              help="Repeatable roundtrip delays to sweep.")
@click.option("--trials", type=int, default=20, show_default=True)
@click.option("--degree", type=int, default=4, show_default=True)
@click.option("--range", "input_range", type=float, default=5.0,
              show_default=True)
@click.option("--precision", "fit_precision", type=int, default=10,
              show_default=True, help="Coefficient precision bits.")
@seed_option
@output_option
def bench(protocols, batch, delays, trials, degree, input_range,
          fit_precision, seed, output):
    """Time one activation layer per protocol across link delays.

    Columns: protocol,delay_ms,mean_s,ci95_s,rounds,bytes,modeled_s.
    mean_s and ci95_s are measured wall times over --trials runs; the
    remaining columns are exact transcript quantities.
    """
    cfg = DEFAULT_CONFIG
    p = cfg.working_precision
    rng = np.random.default_rng(seed)
    values = rng.uniform(-input_range, input_range, size=batch)
    raw = ring.encode_array(values, p, cfg)
    mask = rng.integers(0, 1 << 64, size=batch, dtype=_U64)
    share_vals = (mask, raw - mask)

    coeffs = None
    if any(name != "binary-relu" for name in protocols):
        coeffs = fit_quantized(degree, input_range, fit_precision).coefficients

    out = _writer(output)
    out.writerow(["protocol", "delay_ms", "mean_s", "ci95_s", "rounds",
                  "bytes", "modeled_s"])
    for protocol in protocols:
        party = _activation_party(protocol, coeffs, fit_precision,
                                  share_vals, p)
        for delay in delays:
            net = NetworkConfig(roundtrip_delay_ms=delay)
            times = []
            last = None
            for _ in range(trials):
                dealer = TrustedDealer(seed=seed)
                t0 = time.perf_counter()
                last = run_session_pair(party, party, net=net,
                                        dealer=dealer, cfg=cfg)
                times.append(time.perf_counter() - t0)
            mean = float(np.mean(times))
            ci95 = (1.96 * float(np.std(times, ddof=1)) / len(times) ** 0.5
                    if len(times) > 1 else 0.0)
            snap = last.transcript_a
            out.writerow([protocol, delay, mean, ci95, snap.rounds,
                          snap.bytes_sent, snap.rounds * delay / 1000.0])


@main.command()
@click.option("--exponent", type=int, default=54, show_default=True,
              help="Value magnitude 2^exponent before truncation.")
@click.option("--trials", type=int, default=1000000, show_default=True)
@click.option("--precision", type=int, default=DEFAULT_CONFIG.working_precision,
              show_default=True, help="Bits dropped by the truncation.")
@seed_option
@output_option
def failprob(exponent, trials, precision, seed, output):
    """Monte-Carlo wrap rate of shared local truncation.

    Each trial splits the value into fresh uniform shares, truncates both
    locally, and counts reconstructions more than 2 units off.  Columns:
    exponent,trials,failures,empirical_rate,theoretical_rate.
    """
    if trials < 10 ** 4:
        raise click.BadParameter("at least 10^4 trials are required",
                                 param_hint="--trials")
    if not 0 <= exponent <= 63:
        raise click.BadParameter("exponent must lie in [0, 63]",
                                 param_hint="--exponent")
    v_raw = _U64((1 << exponent) & DEFAULT_CONFIG.mask)
    rng = np.random.default_rng(seed)
    r = rng.integers(0, 1 << 64, size=trials, dtype=_U64)
    ta = ring.truncate_raw(r, precision, mirror=False)
    tb = ring.truncate_raw(v_raw - r, precision, mirror=True)
    truth = _U64(to_unsigned(to_signed(int(v_raw)) >> precision))
    diff = (ta + tb - truth).view(np.int64)
    failures = int(np.count_nonzero(np.abs(diff) > 2))
    theoretical = abs(to_signed(int(v_raw))) / 2.0 ** 64
    out = _writer(output)
    out.writerow(["exponent", "trials", "failures", "empirical_rate",
                  "theoretical_rate"])
    out.writerow([exponent, trials, failures, failures / trials, theoretical])


def _load_graph(model_path: str):
    try:
        return load_model(Path(model_path).read_bytes())
    except ModelFormatError as exc:
        raise click.ClickException(f"cannot load model: {exc}") from exc


def _load_input(input_path: str) -> np.ndarray:
    path = Path(input_path)
    if path.suffix == ".npy":
        return np.load(path)
    return np.loadtxt(path, dtype=np.float64)


def _infer_party(graph, protocol: str, input_vals, seed: int):
    def party(session: Session):
        rng = np.random.default_rng([seed, int(session.role)])
        vals = input_vals if session.role is Role.A else None
        model, x = setup_inference(session, graph, vals, rng, session.cfg)
        out = secure_infer(session, graph, x, protocol=protocol,
                           model=model, cfg=session.cfg)
        opened = session.open_raw(out.values)
        return ring.decode_array(opened, out.scale, session.cfg)
    return party


def _parse_hostport(text: str) -> tuple[str, int]:
    host, _, port = text.rpartition(":")
    try:
        return host or "127.0.0.1", int(port)
    except ValueError:
        raise click.BadParameter(f"expected HOST:PORT, got {text!r}")


@main.command()
@click.option("--model", "model_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--input", "input_path",
              type=click.Path(exists=True, dir_okay=False),
              help=".npy or whitespace-separated text tensor.")
@click.option("--protocol", type=click.Choice(_PROTOCOL_CHOICES),
              default="espn", show_default=True)
@click.option("--delay-ms", "delay", type=float, default=0.0,
              show_default=True)
@click.option("--transport", type=click.Choice(["sim", "socket"]),
              default="sim", show_default=True,
              help="sim runs both parties in this process.")
@click.option("--listen", default=None, metavar="HOST:PORT",
              help="Socket mode: await the peer and act as the client party.")
@click.option("--connect", default=None, metavar="HOST:PORT",
              help="Socket mode: dial the peer and act as the server party.")
@seed_option
def infer(model_path, input_path, protocol, delay, transport, listen,
          connect, seed):
    """Run one secure inference and print prediction plus transcript.

    Both sides read the model file for its architecture; only masked
    weights and masked activations ever cross the link.  Output lines:
    class_index, logits (semicolon-joined), rounds, bytes_sent, wall_s.
    """
    graph = _load_graph(model_path)
    needs_input = transport == "sim" or listen is not None
    if needs_input and input_path is None:
        raise click.UsageError("--input is required on the client side")
    input_vals = _load_input(input_path) if input_path else None
    party = _infer_party(graph, protocol, input_vals, seed)

    if transport == "sim":
        if listen or connect:
            raise click.UsageError("--listen/--connect need --transport socket")
        outcome = run_session_pair(
            party, party, net=NetworkConfig(roundtrip_delay_ms=delay),
            seed=seed)
        logits, snap = outcome.result_a, outcome.transcript_a
    else:
        if (listen is None) == (connect is None):
            raise click.UsageError(
                "socket mode needs exactly one of --listen or --connect")
        net = NetworkConfig(roundtrip_delay_ms=delay, mode="socket")
        if listen is not None:
            host, port = _parse_hostport(listen)
            endpoint = serve_socket(host, port, net)
            role = Role.A
        else:
            host, port = _parse_hostport(connect)
            endpoint = connect_socket(host, port, net)
            role = Role.B
        session = Session(role=role, endpoint=endpoint,
                          dealer=TrustedDealer(seed=seed))
        try:
            logits = party(session)
        finally:
            endpoint.transcript.finish()
            endpoint.close()
        snap = endpoint.transcript.snapshot()

    click.echo(f"class_index,{int(np.argmax(logits))}")
    click.echo("logits," + ";".join(repr(float(v)) for v in logits))
    click.echo(f"rounds,{snap.rounds}")
    click.echo(f"bytes_sent,{snap.bytes_sent}")
    click.echo(f"wall_s,{snap.wall_time_s}")


@main.command()
@click.option("--degree", type=int, default=4, show_default=True)
@click.option("--range", "input_range", type=float, default=5.0,
              show_default=True)
@click.option("--precision", "fit_precision", type=int, default=10,
              show_default=True)
@click.option("--strategy", type=click.Choice(["exact", "refit", "naive"]),
              default="exact", show_default=True)
@output_option
def fit(degree, input_range, fit_precision, strategy, output):
    """Fit integer activation coefficients and report the worst error.

    Columns: degree,range,precision,strategy,coefficients,max_error,at_x.
    Coefficients are the integer numerators over 2^precision, constant
    term first, semicolon-joined.
    """
    try:
        spec = fit_quantized(degree, input_range, fit_precision,
                             strategy=strategy)
    except FittingError as exc:
        raise click.ClickException(str(exc)) from exc
    err, at_x = max_error(spec)
    out = _writer(output)
    out.writerow(["degree", "range", "precision", "strategy",
                  "coefficients", "max_error", "at_x"])
    out.writerow([degree, input_range, fit_precision, strategy,
                  ";".join(str(c) for c in spec.coefficients), err, at_x])


@main.command("rounds")
@click.option("--model", "model_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@output_option
def rounds_table(model_path, output):
    """Per-protocol round and byte totals for one model, by static analysis.

    Columns: protocol,rounds,bytes.  Values match what a live transcript
    of secure_infer records.
    """
    graph = _load_graph(model_path)
    out = _writer(output)
    out.writerow(["protocol", "rounds", "bytes"])
    for protocol in ("espn", "honeybadger", "sqmul", "binary-relu"):
        est = predict_model_cost(graph, protocol)
        out.writerow([protocol, est.rounds, est.bytes_sent])


if __name__ == "__main__":
    main()
