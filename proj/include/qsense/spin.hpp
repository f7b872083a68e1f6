// Copyright 2026 The qsense Authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at

//     https://www.apache.org/licenses/LICENSE-2.0

// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Dense two-level algebra and the exact interval propagator of the augmented
// (state, d state / d delta_omega) dynamics. Everything here is templated on
// the real scalar type; the rest of the library instantiates it with double.

#pragma once

#include <cmath>
#include <complex>

#include <Eigen/Core>

namespace qsense {

template <typename Scalar>
using Complex = std::complex<Scalar>;
template <typename Scalar>
using Spinor = Eigen::Matrix<Complex<Scalar>, 2, 1>;
template <typename Scalar>
using Op2 = Eigen::Matrix<Complex<Scalar>, 2, 2>;
/// Real coefficient vector h of a traceless Hamiltonian h . sigma.
template <typename Scalar>
using Field3 = Eigen::Matrix<Scalar, 3, 1>;

template <typename Scalar>
Op2<Scalar> pauli_x() {
  Op2<Scalar> m;
  m << 0, 1, 1, 0;
  return m;
}

template <typename Scalar>
Op2<Scalar> pauli_y() {
  const Complex<Scalar> i(0, 1);
  Op2<Scalar> m;
  m << 0, -i, i, 0;
  return m;
}

template <typename Scalar>
Op2<Scalar> pauli_z() {
  Op2<Scalar> m;
  m << 1, 0, 0, -1;
  return m;
}

/// h . sigma
template <typename Scalar>
Op2<Scalar> pauli_dot(const Field3<Scalar>& h) {
  const Complex<Scalar> i(0, 1);
  Op2<Scalar> m;
  m << Complex<Scalar>(h.z()), Complex<Scalar>(h.x()) - i * h.y(),
      Complex<Scalar>(h.x()) + i * h.y(), Complex<Scalar>(-h.z());
  return m;
}

/// The pair (psi0, psi1) with psi1 = d psi0 / d delta_omega.
template <typename Scalar>
struct AugmentedPair {
  Spinor<Scalar> psi0 = Spinor<Scalar>::Zero();
  Spinor<Scalar> psi1 = Spinor<Scalar>::Zero();

  AugmentedPair operator+(const AugmentedPair& o) const {
    return {psi0 + o.psi0, psi1 + o.psi1};
  }
  AugmentedPair operator*(Scalar s) const { return {psi0 * s, psi1 * s}; }
};

/// <a|b> summed over both blocks.
template <typename Scalar>
Complex<Scalar> inner(const AugmentedPair<Scalar>& a,
                      const AugmentedPair<Scalar>& b) {
  return a.psi0.dot(b.psi0) + a.psi1.dot(b.psi1);
}

/// Block-lower-triangular 4x4 operator [[D, 0], [L, D]] acting on a pair.
/// Every operator appearing in the augmented dynamics has this shape.
template <typename Scalar>
struct BlockOp {
  Op2<Scalar> diag = Op2<Scalar>::Zero();
  Op2<Scalar> lower = Op2<Scalar>::Zero();

  AugmentedPair<Scalar> apply(const AugmentedPair<Scalar>& s) const {
    return {diag * s.psi0, lower * s.psi0 + diag * s.psi1};
  }
  /// Hermitian adjoint [[D^+, L^+], [0, D^+]] applied to a pair.
  AugmentedPair<Scalar> apply_adjoint(const AugmentedPair<Scalar>& s) const {
    return {diag.adjoint() * s.psi0 + lower.adjoint() * s.psi1,
            diag.adjoint() * s.psi1};
  }
};

/// <pi| op |psi>
template <typename Scalar>
Complex<Scalar> sandwich(const AugmentedPair<Scalar>& pi,
                         const BlockOp<Scalar>& op,
                         const AugmentedPair<Scalar>& psi) {
  return inner(pi, op.apply(psi));
}

/// Augmented generator [[H, 0], [sigma_z/2, H]] with H = h . sigma.
template <typename Scalar>
BlockOp<Scalar> augmented_generator(const Field3<Scalar>& h) {
  return {pauli_dot(h), pauli_z<Scalar>() * Scalar(0.5)};
}

/// Exact exp(-i G dt) for the constant augmented generator G of one interval,
/// together with its derivative along a direction of h.
///
/// For H = a n . sigma the lower block is
///   V = -i [ dt Z_par U + sin(a dt)/a Z_perp ],  Z = sigma_z / 2,
/// where Z_par is the component of Z commuting with H. No splitting, no
/// series truncation; machine precision for any a and dt.
template <typename Scalar>
class IntervalPropagator {
 public:
  IntervalPropagator(const Field3<Scalar>& h, Scalar dt) : h_(h), dt_(dt) {
    a_ = h.norm();
    const Scalar x = a_ * dt;
    cos_ = std::cos(x);
    sinc_ = small(x) ? dt * (Scalar(1) - x * x / 6 + x * x * x * x / 120)
                     : std::sin(x) / a_;
    const Complex<Scalar> i(0, 1);
    const Op2<Scalar> hs = pauli_dot(h);
    op_.diag = Op2<Scalar>::Identity() * cos_ - i * sinc_ * hs;
    // q H is Z_par; |q H| <= 1/2, zero when h vanishes.
    const Scalar q = a_ > Scalar(0) ? h.z() / (2 * a_ * a_) : Scalar(0);
    const Op2<Scalar> z_par = q * hs;
    const Op2<Scalar> z_perp = pauli_z<Scalar>() * Scalar(0.5) - z_par;
    op_.lower = -i * (dt * z_par * op_.diag + sinc_ * z_perp);
  }

  const BlockOp<Scalar>& op() const { return op_; }
  Scalar dt() const { return dt_; }
  const Field3<Scalar>& field() const { return h_; }

  AugmentedPair<Scalar> forward(const AugmentedPair<Scalar>& s) const {
    return op_.apply(s);
  }
  /// Back-propagates an adjoint pair across the interval.
  AugmentedPair<Scalar> backward(const AugmentedPair<Scalar>& s) const {
    return op_.apply_adjoint(s);
  }

  /// d exp(-i G dt) / d h along direction d. Closed form away from the
  /// degenerate point h = 0 (where the caller never differentiates in the
  /// lab frame since |h| >= omega0 / 2 there).
  BlockOp<Scalar> derivative(const Field3<Scalar>& d) const {
    const Complex<Scalar> i(0, 1);
    const Op2<Scalar> hs = pauli_dot(h_);
    const Op2<Scalar> ds = pauli_dot(d);
    const Op2<Scalar>& u = op_.diag;
    const Scalar x = a_ * dt_;

    BlockOp<Scalar> out;
    if (a_ == Scalar(0)) {
      // U = I - i dt D + O(dt^2), V = -i dt Z - dt^2 (D Z + Z D)/2 ...
      // Only the first-order-in-h terms survive at h = 0.
      const Op2<Scalar> z = pauli_z<Scalar>() * Scalar(0.5);
      out.diag = -i * dt_ * ds;
      out.lower = Scalar(-0.5) * dt_ * dt_ * (ds * z + z * ds);
      return out;
    }
    const Scalar ad = h_.dot(d) / a_;  // da along d
    // dS/da with S = sin(a dt)/a
    const Scalar dsinc_da =
        small(x) ? -a_ * dt_ * dt_ * dt_ / 3
                 : (dt_ * cos_ - sinc_) / a_;
    const Scalar dsinc = dsinc_da * ad;
    const Scalar dcos = -dt_ * (sinc_ * a_) * ad;

    out.diag = Op2<Scalar>::Identity() * dcos - i * (dsinc * hs + sinc_ * ds);

    const Scalar q = h_.z() / (2 * a_ * a_);
    const Scalar dq = d.z() / (2 * a_ * a_) - h_.z() * ad / (a_ * a_ * a_);
    const Op2<Scalar> z_par = q * hs;
    const Op2<Scalar> dz_par = dq * hs + q * ds;
    const Op2<Scalar> z_perp = pauli_z<Scalar>() * Scalar(0.5) - z_par;
    out.lower = -i * (dt_ * (dz_par * u + z_par * out.diag) + dsinc * z_perp -
                      sinc_ * dz_par);
    return out;
  }

 private:
  static bool small(Scalar x) { return std::abs(x) < Scalar(1e-4); }

  Field3<Scalar> h_;
  Scalar dt_;
  Scalar a_;
  Scalar cos_;
  Scalar sinc_;
  BlockOp<Scalar> op_;
};

/// (<sigma_x>, <sigma_y>, <sigma_z>) of a normalized spinor.
template <typename Scalar>
Eigen::Matrix<Scalar, 3, 1> bloch_components(const Spinor<Scalar>& psi) {
  const Complex<Scalar> c = std::conj(psi(0)) * psi(1);
  return {2 * c.real(), 2 * c.imag(),
          std::norm(psi(0)) - std::norm(psi(1))};
}

}  // namespace qsense
