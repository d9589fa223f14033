"""Physical conversions for the six weather variables, plus the synthetic
signal generator that drives simulated nodes.

The conversion constants mirror the real hardware the simulated fleet
models: a combined temperature/humidity sensor read over a MODBUS-style
byte protocol, a pyranometer with a 1.67 mV per W/m2 analog output, a
tipping-bucket rain gauge at 0.2794 mm per tip, a cup anemometer with one
switch closure per rotation, and a 16-position wind vane read through a
voltage divider.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass

# Calibration constants; the scenario file can override each of them.
DAVIS_VOLTS_PER_WM2 = 0.00167   # pyranometer output slope
DAVIS_MAX_VOLTS = 3.0           # pyranometer full-scale output
RAIN_MM_PER_TIP = 0.2794        # rain collected per bucket tip
ANEMOMETER_KMH_PER_HZ = 2.4     # wind speed per closure/second
VANE_VREF = 3.3                 # vane divider reference voltage

COMPASS_POINTS = (
    "N", "NNE", "NE", "ENE", "E", "ESE", "SE", "SSE",
    "S", "SSW", "SW", "WSW", "W", "WNW", "NW", "NNW",
)


class SensorError(ValueError):
    pass


class CrcMismatch(SensorError):
    pass


class HumidityOutOfRange(SensorError):
    pass


class VoltageOutOfRange(SensorError):
    pass


class ZeroWindow(SensorError):
    pass


def crc16_modbus(data: bytes) -> int:
    """CRC-16/MODBUS: poly 0xA001 (reflected), init 0xFFFF."""
    crc = 0xFFFF
    for byte in data:
        crc ^= byte
        for _ in range(8):
            if crc & 1:
                crc = (crc >> 1) ^ 0xA001
            else:
                crc >>= 1
    return crc


def am2315_encode(temperature: float, humidity: float) -> bytes:
    """Build the 8-byte register-read response for a temp/humidity pair.

    Layout: function code 0x03, byte count 0x04, RH hi/lo, T hi/lo
    (sign carried in T's top bit), CRC lo, CRC hi.
    """
    if not (0.0 <= humidity <= 100.0):
        raise HumidityOutOfRange(f"humidity {humidity} outside [0, 100]")
    rh = round(humidity * 10)
    t = round(abs(temperature) * 10)
    if t > 0x7FFF:
        raise SensorError(f"temperature {temperature} not encodable")
    t_hi = (t >> 8) & 0x7F
    if temperature < 0:
        t_hi |= 0x80
    body = bytes([0x03, 0x04, (rh >> 8) & 0xFF, rh & 0xFF, t_hi, t & 0xFF])
    crc = crc16_modbus(body)
    return body + bytes([crc & 0xFF, (crc >> 8) & 0xFF])


def am2315_decode(payload: bytes) -> tuple[float, float]:
    """Decode an 8-byte sensor response to (temperature C, humidity %RH)."""
    if len(payload) != 8:
        raise SensorError(f"payload must be 8 bytes, got {len(payload)}")
    body, crc_lo, crc_hi = payload[:6], payload[6], payload[7]
    expected = crc16_modbus(body)
    got = crc_lo | (crc_hi << 8)
    if got != expected:
        raise CrcMismatch(f"expected {expected:#06x}, got {got:#06x}")
    if body[0] != 0x03 or body[1] != 0x04:
        raise SensorError(f"unexpected header bytes {body[0]:#04x} {body[1]:#04x}")
    humidity = ((body[2] << 8) | body[3]) / 10
    if humidity > 100.0:
        raise HumidityOutOfRange(f"decoded humidity {humidity} > 100.0")
    temperature = (((body[4] & 0x7F) << 8) | body[5]) / 10
    if body[4] & 0x80:
        temperature = -temperature
    return temperature, humidity


def davis6450_convert(volts: float,
                      volts_per_wm2: float = DAVIS_VOLTS_PER_WM2) -> float:
    """Pyranometer voltage to irradiance in W/m2."""
    if not (0.0 <= volts <= DAVIS_MAX_VOLTS):
        raise VoltageOutOfRange(f"voltage {volts} outside [0, {DAVIS_MAX_VOLTS}]")
    return volts / volts_per_wm2


def rain_tips_to_mm(tips: int, mm_per_tip: float = RAIN_MM_PER_TIP) -> float:
    """Bucket tip count to millimetres of rainfall."""
    if tips < 0:
        raise SensorError(f"tip count must be >= 0, got {tips}")
    return tips * mm_per_tip


def anemometer_to_kmh(closures: int, window: float,
                      kmh_per_hz: float = ANEMOMETER_KMH_PER_HZ) -> float:
    """Switch closures over a window (seconds) to wind speed in km/h."""
    if window <= 0:
        raise ZeroWindow(f"window must be positive, got {window}")
    if closures < 0:
        raise SensorError(f"closure count must be >= 0, got {closures}")
    return (closures / window) * kmh_per_hz


def vane_sector(volts: float, vref: float = VANE_VREF) -> int:
    """Vane divider voltage to a compass sector index 0..15 (0 = N, clockwise).

    The voltage span is split into 16 equal sectors with nearest-sector
    rounding; readings just below full scale wrap back to north.
    """
    if vref <= 0:
        raise VoltageOutOfRange(f"vref must be positive, got {vref}")
    if not (0.0 <= volts <= vref):
        raise VoltageOutOfRange(f"voltage {volts} outside [0, {vref}]")
    return int(math.floor((volts / vref) * 16 + 0.5)) % 16


def vane_direction(volts: float, vref: float = VANE_VREF) -> str:
    """Vane divider voltage to one of the 16 compass points."""
    return COMPASS_POINTS[vane_sector(volts, vref)]


@dataclass(frozen=True)
class WeatherSample:
    """A point-in-time snapshot of all six simulated weather inputs.

    ``rain_tips`` and ``wind_closures`` are switch-closure counts observed
    over the one-second counter window preceding the sample, so wind speed
    converts with a 1-second window.
    """

    temperature: float
    humidity: float
    irradiance: float
    rain_tips: int
    wind_closures: int
    vane_voltage: float
    vane_vref: float = VANE_VREF

    def __post_init__(self):
        if not (0.0 <= self.humidity <= 100.0):
            raise SensorError(f"humidity {self.humidity} outside [0, 100]")
        if self.irradiance < 0:
            raise SensorError(f"irradiance {self.irradiance} must be >= 0")
        if self.rain_tips < 0 or self.wind_closures < 0:
            raise SensorError("counter values must be >= 0")
        if not (0.0 <= self.vane_voltage <= self.vane_vref):
            raise SensorError(
                f"vane voltage {self.vane_voltage} outside [0, {self.vane_vref}]")


_DAY = 86400.0


def _noise(seed: int, t: float, channel: str) -> random.Random:
    # String seeding hashes deterministically across processes and platforms.
    return random.Random(f"{seed}:{channel}:{round(t, 3)}")


def _station_offset(seed: int, channel: str, bound: float) -> float:
    return _noise(seed, -1.0, channel).uniform(-bound, bound)


def synth_weather(t: float, seed: int) -> WeatherSample:
    """Deterministic synthetic weather at ``t`` seconds into a scenario.

    Smooth diurnal-style base curves carry a small per-seed station offset
    (at most 0.1 C / 0.5 %RH, so co-located stations track each other) plus
    per-sample noise bounded by the sensors' stated accuracies: 0.1 C for
    temperature and 2 %RH for humidity.
    """
    if t < 0:
        raise SensorError(f"t must be >= 0, got {t}")
    phase = 2 * math.pi * (t / _DAY)

    temp = 18.0 + 7.0 * math.sin(phase) \
        + _station_offset(seed, "temp", 0.1) \
        + _noise(seed, t, "temp").uniform(-0.1, 0.1)

    humidity = 65.0 - 15.0 * math.sin(phase) \
        + _station_offset(seed, "rh", 0.5) \
        + _noise(seed, t, "rh").uniform(-2.0, 2.0)
    humidity = min(100.0, max(0.0, humidity))

    irradiance = max(0.0, 800.0 * math.sin(phase)) \
        + _noise(seed, t, "sun").uniform(0.0, 5.0)

    # Light intermittent drizzle: roughly one tip per twenty samples.
    rain_tips = 1 if _noise(seed, t, "rain").random() < 0.05 else 0

    gusts = 3.0 + 2.0 * math.sin(2 * math.pi * t / 3600.0) \
        + _noise(seed, t, "wind").uniform(0.0, 2.0)
    wind_closures = max(0, int(round(gusts)))

    drift = 0.25 + 0.1 * math.sin(2 * math.pi * t / 1800.0) \
        + _station_offset(seed, "vane", 0.05) \
        + _noise(seed, t, "vane").uniform(-0.02, 0.02)
    vane_voltage = (drift % 1.0) * VANE_VREF

    return WeatherSample(
        temperature=temp,
        humidity=humidity,
        irradiance=irradiance,
        rain_tips=rain_tips,
        wind_closures=wind_closures,
        vane_voltage=vane_voltage,
    )
