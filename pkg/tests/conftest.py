import numpy as np
import pytest

from skybeam.scenario import Scenario, load_bundled


def make_scenario(K=2, N=3, M=2, seed=0, users=None, wavelength=0.1,
                  sigma2=1e-14, P_max=3.0, H=100.0, V_min=1.0, V_max=20.0,
                  a_max=5.0, L_wavelengths=8.0, d_min_wavelengths=0.5,
                  tau=4.0, speed=12.5, q_init=(0.0, 250.0),
                  q_final=None, enforce_endpoints=True, name="test") -> Scenario:
    """Small synthetic scenario; geometry defaults keep the straight-line
    initial path inside the speed band."""
    T = tau * N
    if q_final is None:
        q_final = (q_init[0] + speed * T, q_init[1])
    if users is None:
        rng = np.random.default_rng(seed)
        users = rng.uniform(50.0, 450.0, size=(K, 2))
    return Scenario(
        user_positions=tuple(map(tuple, np.asarray(users, dtype=float))),
        H=H,
        T=T,
        N=N,
        q_init=q_init,
        q_final=q_final,
        V_min=V_min,
        V_max=V_max,
        a_max=a_max,
        M=M,
        L=L_wavelengths * wavelength,
        d_min=d_min_wavelengths * wavelength,
        wavelength=wavelength,
        P_max=P_max,
        sigma2=(sigma2,) * int(K),
        chi=1e-6,
        enforce_endpoints=enforce_endpoints,
        name=name,
    )


def hover_scenario(K=1, M=4, users=((250.0, 250.0),), sigma2=1e-14,
                   P_max=3.0, name="hover") -> Scenario:
    """One-slot scenario with coincident endpoints (the path is pinned)."""
    return make_scenario(
        K=K, N=1, M=M, users=users, sigma2=sigma2, P_max=P_max,
        q_init=(250.0, 250.0), q_final=(250.0, 250.0), speed=0.0, name=name,
    )


@pytest.fixture(scope="session")
def paper_scenario() -> Scenario:
    return load_bundled()
