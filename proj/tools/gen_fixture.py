#!/usr/bin/env python3
"""Writes the synthetic blacksburg_synth scenario (manifest, MBS CSV, buildings, weather trace).

Deterministic: the same seed always produces byte-identical files.
"""
import argparse
import json
import math
import random
from pathlib import Path

EARTH_RADIUS_M = 6371000.0
FSS_LAT = 37.2025
FSS_LON = -80.434444


def to_geo(east, north):
    lat = FSS_LAT + math.degrees(north / EARTH_RADIUS_M)
    lon = FSS_LON + math.degrees(east / (EARTH_RADIUS_M * math.cos(math.radians(FSS_LAT))))
    return round(lat, 7), round(lon, 7)


def place_mbs(rng, count):
    sites = []
    while len(sites) < count:
        d = rng.uniform(600.0, 4900.0)
        az = rng.uniform(0.0, 2.0 * math.pi)
        e, n = d * math.sin(az), d * math.cos(az)
        # keep sites apart like real cell grids
        if all(math.hypot(e - x, n - y) > 350.0 for x, y in sites):
            sites.append((e, n))
    return sites


def rectangle(rng, ce, cn):
    w = rng.uniform(10.0, 40.0)
    h = rng.uniform(10.0, 40.0)
    rot = rng.uniform(0.0, math.pi)
    c, s = math.cos(rot), math.sin(rot)
    ring = []
    for dx, dy in ((-w / 2, -h / 2), (w / 2, -h / 2), (w / 2, h / 2), (-w / 2, h / 2)):
        ring.append((ce + dx * c - dy * s, cn + dx * s + dy * c))
    return ring


def place_buildings(rng, count, mbs, clear_radius):
    out = []
    while len(out) < count:
        # denser near the FSS, thinning out towards the edge of the area
        r = clear_radius + (4900.0 - clear_radius) * rng.random() ** 1.5
        az = rng.uniform(0.0, 2.0 * math.pi)
        ce, cn = r * math.sin(az), r * math.cos(az)
        if any(math.hypot(ce - x, cn - y) < 60.0 for x, y in mbs):
            continue
        if any(math.hypot(ce - x, cn - y) < 45.0 for x, y, _, _ in out):
            continue
        out.append((ce, cn, rectangle(rng, ce, cn), round(rng.uniform(10.0, 40.0), 1)))
    return out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default=str(Path(__file__).resolve().parent.parent / "fixtures" / "blacksburg_synth"))
    ap.add_argument("--seed", type=int, default=3)
    ap.add_argument("--mbs", type=int, default=33)
    ap.add_argument("--buildings", type=int, default=600)
    # open ground around the dish, as at a real earth-station site
    ap.add_argument("--clear-radius", type=float, default=300.0)
    args = ap.parse_args()

    rng = random.Random(args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    mbs = place_mbs(rng, args.mbs)
    lines = ["id,lat,lon,height_m"]
    for i, (e, n) in enumerate(mbs, 1):
        lat, lon = to_geo(e, n)
        lines.append(f"mbs-{i:02d},{lat:.7f},{lon:.7f},25")
    (out / "mbs.csv").write_text("\n".join(lines) + "\n")

    features = []
    for i, (_, _, ring, height) in enumerate(place_buildings(rng, args.buildings, mbs, args.clear_radius), 1):
        coords = [list(reversed(to_geo(e, n))) for e, n in ring]
        coords.append(coords[0])
        features.append({
            "type": "Feature",
            "id": f"bldg-{i:04d}",
            "properties": {"height_m": height},
            "geometry": {"type": "Polygon", "coordinates": [coords]},
        })
    (out / "buildings.geojson").write_text(json.dumps({"type": "FeatureCollection", "features": features}) + "\n")

    (out / "weather.csv").write_text(
        "unix_time,kind,rain_rate\n0,clear,0\n3600,rain_snow,10\n7200,clear,0\n")

    manifest = {
        "schema_version": 1,
        "name": "blacksburg_synth",
        "fss": {"id": "fss-forecast-dr", "lat": FSS_LAT, "lon": FSS_LON, "height_m": 4.5,
                "noise_temperature_k": 290},
        "mbs_csv": "mbs.csv",
        "buildings_geojson": "buildings.geojson",
        "weather_trace": "weather.csv",
        "radio": {"total_power_w": 10.0, "channel_bandwidth_hz": 1.0e8},
        "seeds": {"ue_drop": 42, "shadow": 42},
        "rainy_rate_mm_per_hr": 10.0,
        "max_mbs_distance_m": 5000.0,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")


if __name__ == "__main__":
    main()
