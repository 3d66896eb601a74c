#pragma once

#include "mixbank/frontend.hpp"
#include "mixbank/harness.hpp"
#include "mixbank/model.hpp"
#include "mixbank/numerics.hpp"
#include "mixbank/recovery.hpp"
#include "mixbank/seeding.hpp"
#include "mixbank/spectral.hpp"
#include "mixbank/text.hpp"
