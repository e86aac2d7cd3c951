#pragma once

#include "qmadiab/adiabatic.hpp"
#include "qmadiab/config_file.hpp"
#include "qmadiab/defaults.hpp"
#include "qmadiab/errors.hpp"
#include "qmadiab/fit.hpp"
#include "qmadiab/matrix.hpp"
#include "qmadiab/models.hpp"
#include "qmadiab/spectral.hpp"
#include "qmadiab/sweep.hpp"
