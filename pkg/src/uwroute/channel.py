"""Underwater acoustic channel model.

Pure functions for the physical layer: Thorpe absorption, path attenuation,
mean SNR, Rayleigh-faded BPSK bit error rate, and whole-packet delivery
probability. Frequencies are in kHz, distances in meters unless a name says
otherwise. All functions are stateless and thread-safe.

Unit convention for attenuation: the Thorpe formula yields dB per km, so the
absorption factor a(f)^l is exponentiated with the distance in kilometers,
while the spreading term l^kappa uses meters. Exponentiating per meter would
make a 150 m link numerically dead at any realistic frequency.
"""

import math
from dataclasses import dataclass, replace


@dataclass(frozen=True)
class ChannelParams:
    """Acoustic link parameters.

    frequency_khz: carrier frequency f (kHz)
    spreading_kappa: spreading loss exponent, in [1, 2]
    atten_const_A0: constant attenuation factor (dimensionless)
    energy_per_bit: transmit energy per bit (J/bit)
    noise_density_N0: AWGN power density (W/Hz)
    packet_bits_M: packet size (bits)
    bit_rate_mu: transmission rate (bit/s)
    """

    frequency_khz: float = 10.0
    spreading_kappa: float = 1.5
    atten_const_A0: float = 1.0
    energy_per_bit: float = 1.0
    noise_density_N0: float = 1e-9
    packet_bits_M: int = 512
    bit_rate_mu: float = 10_000.0

    def __post_init__(self):
        if self.frequency_khz <= 0:
            raise ValueError(f"frequency_khz must be > 0, got {self.frequency_khz}")
        if not 1.0 <= self.spreading_kappa <= 2.0:
            raise ValueError(f"spreading_kappa must be in [1, 2], got {self.spreading_kappa}")
        for name in ("atten_const_A0", "energy_per_bit", "noise_density_N0", "bit_rate_mu"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0, got {getattr(self, name)}")
        if self.packet_bits_M < 1:
            raise ValueError(f"packet_bits_M must be >= 1, got {self.packet_bits_M}")

    @property
    def serialization_s(self) -> float:
        """Time to clock one packet onto the channel, M/mu."""
        return self.packet_bits_M / self.bit_rate_mu


def thorpe_absorption_db_per_km(f: float) -> float:
    """Thorpe absorption coefficient 10*log a(f), in dB/km, for f in kHz."""
    if f <= 0:
        raise ValueError(f"frequency must be > 0 kHz, got {f}")
    f2 = f * f
    return 2.75e-4 * f2 + 44.0 * f2 / (4100.0 + f) + 0.11 * f2 / (1.0 + f2) + 1e-3


def attenuation(l: float, params: ChannelParams) -> float:
    """Path attenuation A(l, f) = A0 * l^kappa * a(f)^(l/1000), linear ratio.

    Spreading uses l in meters; the absorption exponent uses kilometers (see
    module docstring).
    """
    if l <= 0:
        raise ValueError(f"distance must be > 0 m, got {l}")
    a_db_km = thorpe_absorption_db_per_km(params.frequency_khz)
    a_linear = 10.0 ** (a_db_km / 10.0)
    return params.atten_const_A0 * l**params.spreading_kappa * a_linear ** (l / 1000.0)


def mean_snr(l: float, params: ChannelParams) -> float:
    """Average received SNR, e_b / (N0 * A(l, f)), linear."""
    return params.energy_per_bit / (params.noise_density_N0 * attenuation(l, params))


def rayleigh_bpsk_ber(snr_mean: float) -> float:
    """Bit error probability of BPSK under Rayleigh fading with mean SNR.

    Closed form of averaging the AWGN BPSK error rate over the exponential
    SNR density: 0.5 * (1 - sqrt(snr / (1 + snr))).
    """
    if snr_mean < 0:
        raise ValueError(f"mean SNR must be >= 0, got {snr_mean}")
    return 0.5 * (1.0 - math.sqrt(snr_mean / (1.0 + snr_mean)))


def bit_error_prob(l: float, params: ChannelParams) -> float:
    """Per-bit error probability over a link of length l meters."""
    return rayleigh_bpsk_ber(mean_snr(l, params))


def packet_success_prob(p_e: float, bits: int) -> float:
    """Probability that all `bits` bits survive, (1 - p_e)^bits."""
    if not 0.0 <= p_e <= 1.0:
        raise ValueError(f"bit error probability must be in [0, 1], got {p_e}")
    if bits < 1:
        raise ValueError(f"bits must be >= 1, got {bits}")
    return (1.0 - p_e) ** bits

def packet_delivery_prob(l: float, params: ChannelParams) -> float:
    """Probability a whole packet crosses a link of length l without error."""
    return packet_success_prob(bit_error_prob(l, params), params.packet_bits_M)


def sound_speed(depth_m: float, temp_c: float, salinity_ppt: float) -> float:
    """Sound speed in seawater (m/s) from depth H (m), temperature T (degC),
    and salinity S (ppt); nine-term empirical polynomial.

    Provided for completeness: the simulation engine uses a constant
    1500 m/s (see ScenarioConfig.sound_speed_mps).
    """
    H, T, S = depth_m, temp_c, salinity_ppt
    return (
        -7.139e-13 * H**3 * T
        + 2.374e-2 * T**3
        + 1.675e-7 * H**2
        - 5.304e-2 * T**2
        - 1.025e-2 * T * (S - 35.0)
        + 0.163 * H
        + 4.591 * T
        + 1.34 * (S - 35.0)
        + 1448.96
    )


def calibrate_energy_per_bit(
    params: ChannelParams,
    target_distance_m: float = 100.0,
    target_pdr: float = 0.9,
    rel_tol: float = 1e-9,
) -> ChannelParams:
    """Return params with energy_per_bit set so that
    packet_delivery_prob(target_distance_m) == target_pdr.

    Solved by bisection on log10(e_b). The operating point is otherwise
    unconstrained: e_b, N0, f, M and mu have no published values.
    """
    if not 0.0 < target_pdr < 1.0:
        raise ValueError(f"target_pdr must be in (0, 1), got {target_pdr}")

    def pdr_at(log_eb: float) -> float:
        return packet_delivery_prob(target_distance_m, replace(params, energy_per_bit=10.0**log_eb))

    lo, hi = -30.0, 30.0
    while pdr_at(lo) > target_pdr:
        lo -= 30.0
    while pdr_at(hi) < target_pdr:
        hi += 30.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if pdr_at(mid) < target_pdr:
            lo = mid
        else:
            hi = mid
        if hi - lo < rel_tol * max(1.0, abs(hi)):
            break
    return replace(params, energy_per_bit=10.0 ** (0.5 * (lo + hi)))
