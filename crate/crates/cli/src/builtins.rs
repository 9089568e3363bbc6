//! Built-in scenario suites shipped with the binary.

/// A named suite of scenario documents; it passes when every case passes.
#[derive(Debug, Clone, Copy)]
pub struct Builtin {
    pub name: &'static str,
    pub summary: &'static str,
    /// `(file name, TOML text)` for each case.
    pub cases: &'static [(&'static str, &'static str)],
}

macro_rules! case {
    ($dir:literal, $file:literal) => {
        ($file, include_str!(concat!("../scenarios/", $dir, "/", $file)))
    };
}

pub const BUILTINS: &[Builtin] = &[
    Builtin {
        name: "kepler-elliptic",
        summary: "Sundman-linearized radial Kepler motion against r'' = 2Er + k and the analytic ellipse",
        cases: &[case!("kepler-elliptic", "kepler-elliptic.toml")],
    },
    Builtin {
        name: "kepler-time-map",
        summary: "recovered t(tau) against t = A(tau - (e/omega) sin(omega tau))",
        cases: &[case!("kepler-time-map", "kepler-time-map.toml")],
    },
    Builtin {
        name: "sundman-orbits",
        summary: "orbits and first integrals preserved under X -> fX",
        cases: &[
            case!("sundman-orbits", "rotation-radial.toml"),
            case!("sundman-orbits", "oscillator-exp.toml"),
            case!("sundman-orbits", "pendulum-cos.toml"),
        ],
    },
    Builtin {
        name: "linstruct-theorem",
        summary: "linearity and affinity criteria and the linearizing factor of x^2 d/dx",
        cases: &[
            case!("linstruct-theorem", "linear.toml"),
            case!("linstruct-theorem", "nonlinear.toml"),
            case!("linstruct-theorem", "affine.toml"),
            case!("linstruct-theorem", "linearizing-factor.toml"),
        ],
    },
    Builtin {
        name: "christoffel-polar-sphere",
        summary: "Christoffel symbols of the polar plane and the sphere against closed forms",
        cases: &[
            case!("christoffel-polar-sphere", "polar-symbolic.toml"),
            case!("christoffel-polar-sphere", "polar-finite-difference.toml"),
            case!("christoffel-polar-sphere", "sphere-symbolic.toml"),
            case!("christoffel-polar-sphere", "sphere-finite-difference.toml"),
        ],
    },
    Builtin {
        name: "conformal-identities",
        summary: "conformal Christoffel formula and covariant-derivative identity on two metrics",
        cases: &[
            case!("conformal-identities", "skewed-christoffel.toml"),
            case!("conformal-identities", "skewed-nabla.toml"),
            case!("conformal-identities", "sphere-christoffel.toml"),
            case!("conformal-identities", "sphere-nabla.toml"),
        ],
    },
    Builtin {
        name: "geodesic-properties",
        summary: "speed conservation, affine reparametrization and Sundman-reparametrized geodesics",
        cases: &[case!("geodesic-properties", "sphere-geodesic.toml")],
    },
    Builtin {
        name: "killing-pregeodesic",
        summary: "Killing fields, constant-length autoparallels and the pregeodesic field r d/dr",
        cases: &[
            case!("killing-pregeodesic", "rotation-killing.toml"),
            case!("killing-pregeodesic", "heisenberg-vertical.toml"),
            case!("killing-pregeodesic", "radial-pregeodesic.toml"),
        ],
    },
    Builtin {
        name: "newton-sundman",
        summary: "Newtonian fields under Y = hX for a catalogue of positive factors",
        cases: &[case!("newton-sundman", "spring-rotation.toml")],
    },
    Builtin {
        name: "jacobi-harmonic",
        summary: "Jacobi-metric geodesics against the 2D harmonic oscillator at E0 = 1",
        cases: &[case!("jacobi-harmonic", "jacobi-harmonic.toml")],
    },
    Builtin {
        name: "jacobi-kepler",
        summary: "Jacobi-metric geodesics against the planar Kepler orbit at E0 = -1/8",
        cases: &[case!("jacobi-kepler", "jacobi-kepler.toml")],
    },
];

pub fn find(name: &str) -> Option<&'static Builtin> {
    BUILTINS.iter().find(|b| b.name == name)
}
