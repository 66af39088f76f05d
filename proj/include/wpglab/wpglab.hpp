#ifndef WPGLAB_WPGLAB_HPP
#define WPGLAB_WPGLAB_HPP

#include "wpglab/core.hpp"
#include "wpglab/quadrature.hpp"
#include "wpglab/mixture.hpp"
#include "wpglab/model.hpp"
#include "wpglab/policy.hpp"
#include "wpglab/bellman.hpp"
#include "wpglab/constants.hpp"
#include "wpglab/wpgd.hpp"
#include "wpglab/harness/config.hpp"
#include "wpglab/harness/outputs.hpp"
#include "wpglab/harness/experiment.hpp"
#include "wpglab/harness/verify.hpp"
#include "wpglab/harness/cli.hpp"

#endif
