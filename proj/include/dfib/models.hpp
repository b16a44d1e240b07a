#pragma once

#include "dfib/fibration.hpp"
#include "dfib/geometry.hpp"

namespace dfib {

/// Unit-speed lines in the disk of given radius; z = (alpha, beta) with entry point
/// R(cos alpha, sin alpha) and direction the inward normal rotated by beta.
RayFamily flat_disk_geodesics(double radius);
/// Same lines generated by H_p for p = |xi|^2 - 1 (speed 2).
RayFamily flat_disk_cosphere(double radius);
/// Bicharacteristics of p entering the disk with the same (alpha, beta) as above; the
/// covector is the entry direction scaled onto {p = 0}. Throws NotOnCharacteristic.
RayFamily disk_bicharacteristics(const Symbol& p, double radius);
/// Entry parameters (alpha, beta) of the line {x . theta(w) = s} traversed along theta-perp.
Vec disk_params_from_line(double w, double s, double radius);

/// Stereographic chart of the unit sphere: p = (1+|x|^2)^2 |xi|^2 / 8.
Symbol sphere_energy();
/// Unit-speed great circles through the equator point (cos a, sin a) at angle b to the equator.
RayFamily sphere_geodesics(double t_max);

/// p = -xi0^2 + xi1^2 + xi2^2 on R^{1+2}.
Symbol minkowski_symbol();
/// Light rays in the cylinder |x'| <= radius; z = (t0, alpha, beta), xi = (-1, unit spatial).
RayFamily minkowski_light_rays(double radius, double time_half);

/// Full family of null bicharacteristics entering the cylinder: z = (t0, alpha, beta, k)
/// with xi = k (-1, unit spatial), so dim G = 2n - 2.
RayFamily minkowski_null_rays(double radius, double time_half);

}  // namespace dfib
