"""Surrogate safety measures for a single closing pair and a lane change.

Run: python3 demos/01_surrogate_measures.py
"""
from simsafe.domain import KMH, RoadSection, VehicleObservation
from simsafe.measures import (
    FrictionConfig,
    critical_lateral_acceleration,
    delta_a_lat,
    drac,
    lag_gap_variation,
    lateral_acceleration,
    mu_long,
    ra_lim,
    ra_need,
    ttc,
)

# a follower at 20 m/s, 25 m behind a 10 m/s leader
follower = VehicleObservation("E1", 0, "F", 0.0, 1, 0.0, 20.0, 0.0, 4.5, leader_id="L")
leader = VehicleObservation("E1", 0, "L", 0.0, 1, 29.5, 10.0, 0.0, 4.5)
road = RoadSection("S1", -100.0, 500.0)

print("DRAC  (m/s^2):", drac(follower, leader))
print("TTC   (s):    ", ttc(follower, leader))
print("RA_need (+,-):", tuple(ra_need(follower, leader)))
print("RA_lim dry:   ", round(ra_lim(follower, leader, road, "dry"), 4))
print("RA_lim wet:   ", round(ra_lim(follower, leader, road, "wet"), 4))

# the follower brakes at 3 m/s^2: the needed extra deceleration turns negative
braking = VehicleObservation("E1", 0, "F", 0.0, 1, 0.0, 20.0, -3.0, 4.5, leader_id="L")
print("RA_need braking (+,-):", tuple(ra_need(braking, leader)))

# friction along the speed range
cfg = FrictionConfig()
for kmh in (0, 50, 100, 130, 150):
    v = kmh * KMH
    print(f"{kmh:4d} km/h  car dry {mu_long(v, 'car', 'dry'):.3f}  car wet {mu_long(v, 'car', 'wet'):.3f}"
          f"  heavy dry {mu_long(v, 'heavy', 'dry'):.3f}")

# lane change on a curve: lateral demand vs. capacity
curve = RoadSection("C1", 0.0, 300.0, radius=180.0, superelevation=0.04)
changer = VehicleObservation("E1", 0, "S", 0.0, 2, 100.0, 30.0, 0.0, 4.5, lc_state="changing")
lag = VehicleObservation("E1", 0, "B", 0.0, 1, 80.0, 33.0, 0.0, 4.5)
a_lat = lateral_acceleration(changer, curve, cfg)
a_crit = critical_lateral_acceleration(changer, curve, "wet", cfg)
print(f"lateral demand {a_lat:.2f} m/s^2, capacity on wet {a_crit:.2f} m/s^2 ->", tuple(delta_a_lat(a_lat, a_crit)))
print("lag gap variation (+,-):", tuple(lag_gap_variation(changer, lag)))
