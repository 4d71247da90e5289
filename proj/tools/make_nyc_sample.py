#!/usr/bin/env python3
"""Writes data/nyc_sample/: 10,000 rows in the 2016 NYC yellow-cab CSV layout plus
region polygons for Manhattan south of Central Park.

The rows are generated, not copied from the public files: pickups are drawn
around a handful of Manhattan hotspots with a weekday commute profile, and a
small share of rows carries the defects found in the real exports (zero
coordinates, unparsable timestamps, out-of-region pickups at the airports).
"""

import csv
import json
import math
from datetime import datetime, timedelta
from pathlib import Path

import numpy as np

ROWS = 10_000
SEED = 2016
START = datetime(2016, 1, 4)  # Monday, local time
DAYS = 7

HEADER = [
    "VendorID", "tpep_pickup_datetime", "tpep_dropoff_datetime", "passenger_count", "trip_distance",
    "pickup_longitude", "pickup_latitude", "RatecodeID", "store_and_fwd_flag", "dropoff_longitude",
    "dropoff_latitude", "payment_type", "fare_amount", "extra", "mta_tax", "tip_amount", "tolls_amount",
    "improvement_surcharge", "total_amount",
]

# (lat, lon, weight, spread in degrees)
HOTSPOTS = [
    (40.7506, -73.9935, 3.0, 0.004),  # Penn Station
    (40.7527, -73.9772, 3.0, 0.004),  # Grand Central
    (40.7580, -73.9855, 2.5, 0.004),  # Times Square
    (40.7411, -73.9897, 1.5, 0.005),  # Flatiron
    (40.7265, -73.9815, 1.2, 0.006),  # East Village
    (40.7128, -74.0060, 1.5, 0.005),  # City Hall
    (40.7075, -74.0113, 1.2, 0.004),  # Financial District
    (40.7359, -74.0036, 1.0, 0.006),  # West Village
    (40.7648, -73.9808, 1.5, 0.005),  # Columbus Circle south
]
AIRPORTS = [(40.6413, -73.7781), (40.7769, -73.8740)]

# Manhattan below 59th Street, split into three strips for leave-one-region-out runs.
REGIONS = {
    "lower": [(40.7000, -74.0200), (40.7000, -73.9750), (40.7290, -73.9700), (40.7290, -74.0150)],
    "middle": [(40.7290, -74.0150), (40.7290, -73.9700), (40.7480, -73.9680), (40.7480, -74.0100)],
    "upper": [(40.7480, -74.0100), (40.7480, -73.9680), (40.7680, -73.9580), (40.7680, -74.0000)],
}


def hourly_profile(hour, weekday):
    base = 0.3 + 1.0 * math.exp(-((hour - 8.5) ** 2) / 4.5) + 0.9 * math.exp(-((hour - 18.5) ** 2) / 8.0)
    base += 0.5 * math.exp(-((hour - 13) ** 2) / 8.0)
    if weekday >= 5:
        base = 0.5 + 0.6 * math.exp(-((hour - 14) ** 2) / 18.0) + 0.5 * math.exp(-((hour - 23) ** 2) / 6.0)
    return base


def main():
    rng = np.random.default_rng(SEED)
    out_dir = Path(__file__).resolve().parent.parent / "data" / "nyc_sample"
    out_dir.mkdir(parents=True, exist_ok=True)

    slots = [START + timedelta(minutes=30 * k) for k in range(DAYS * 48)]
    weights = np.array([hourly_profile(t.hour + t.minute / 60, t.weekday()) for t in slots])
    weights /= weights.sum()
    hot_w = np.array([h[2] for h in HOTSPOTS])
    hot_w /= hot_w.sum()

    rows = []
    for i in range(ROWS):
        slot = slots[rng.choice(len(slots), p=weights)]
        pickup = slot + timedelta(seconds=int(rng.integers(0, 1800)))
        if rng.random() < 0.06:
            lat, lon = AIRPORTS[int(rng.integers(0, 2))]
            lat += rng.normal(0, 0.002)
            lon += rng.normal(0, 0.002)
        else:
            h = HOTSPOTS[rng.choice(len(HOTSPOTS), p=hot_w)]
            lat, lon = rng.normal(h[0], h[3]), rng.normal(h[1], h[3])
        dist_km = float(rng.gamma(2.0, 1.2))
        bearing = rng.uniform(0, 2 * math.pi)
        dlat = dist_km * math.cos(bearing) / 111.2
        dlon = dist_km * math.sin(bearing) / (111.2 * math.cos(math.radians(lat)))
        duration = timedelta(seconds=int(120 + dist_km * 240 + rng.integers(0, 300)))
        fare = round(2.5 + 1.56 * dist_km + duration.total_seconds() / 120, 2)
        tip = round(fare * rng.choice([0.0, 0.15, 0.2]), 2)
        row = {
            "VendorID": int(rng.integers(1, 3)),
            "tpep_pickup_datetime": pickup.strftime("%Y-%m-%d %H:%M:%S"),
            "tpep_dropoff_datetime": (pickup + duration).strftime("%Y-%m-%d %H:%M:%S"),
            "passenger_count": int(rng.choice([1, 1, 1, 2, 3, 5])),
            "trip_distance": round(dist_km / 1.609, 2),
            "pickup_longitude": f"{lon:.6f}",
            "pickup_latitude": f"{lat:.6f}",
            "RatecodeID": 1,
            "store_and_fwd_flag": "N",
            "dropoff_longitude": f"{lon + dlon:.6f}",
            "dropoff_latitude": f"{lat + dlat:.6f}",
            "payment_type": int(rng.choice([1, 2])),
            "fare_amount": fare,
            "extra": 0.5,
            "mta_tax": 0.5,
            "tip_amount": tip,
            "tolls_amount": 0,
            "improvement_surcharge": 0.3,
            "total_amount": round(fare + tip + 1.3, 2),
        }
        u = rng.random()
        if u < 0.02:
            row["dropoff_longitude"] = "0"
            row["dropoff_latitude"] = "0"
        elif u < 0.025:
            row["pickup_longitude"] = "0"
            row["pickup_latitude"] = "0"
        elif u < 0.03:
            row["tpep_pickup_datetime"] = "2016-01-?? 25:00:00"
        rows.append(row)

    rows.sort(key=lambda r: r["tpep_pickup_datetime"])
    with open(out_dir / "yellow_tripdata_2016-01_sample.csv", "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=HEADER, lineterminator="\r\n")
        w.writeheader()
        w.writerows(rows)

    all_ring = [REGIONS["lower"][0], REGIONS["lower"][1], REGIONS["upper"][2], REGIONS["upper"][3]]
    for name, ring in list(REGIONS.items()) + [("manhattan_south", all_ring)]:
        coords = [[lon, lat] for lat, lon in ring] + [[ring[0][1], ring[0][0]]]
        doc = {"type": "Feature", "properties": {"name": name},
               "geometry": {"type": "Polygon", "coordinates": [coords]}}
        (out_dir / f"{name}.geojson").write_text(json.dumps(doc, indent=1) + "\n")


if __name__ == "__main__":
    main()
