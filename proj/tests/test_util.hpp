#pragma once

#include <initializer_list>

#include "dfib/linalg.hpp"

inline dfib::Vec vec(std::initializer_list<double> v) {
  dfib::Vec out(static_cast<int>(v.size()));
  int i = 0;
  for (double a : v) out[i++] = a;
  return out;
}
