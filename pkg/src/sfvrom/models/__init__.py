from sfvrom.models.physics import (
    Burgers,
    ConservationLaw,
    Euler,
    EulerParams,
    burgers_flux,
    davis_wave_speed,
    euler_flux,
    euler_pressure,
    lax_friedrichs,
)
