// idevc/idevc.hpp: umbrella header.

#ifndef IDEVC_IDEVC_HPP
#define IDEVC_IDEVC_HPP

#include "idevc/config.hpp"
#include "idevc/errors.hpp"
#include "idevc/eval.hpp"
#include "idevc/gaussian_bench.hpp"
#include "idevc/gradcheck.hpp"
#include "idevc/graph.hpp"
#include "idevc/matrix.hpp"
#include "idevc/mibounds.hpp"
#include "idevc/models.hpp"
#include "idevc/optim.hpp"
#include "idevc/synthdata.hpp"
#include "idevc/trainer.hpp"

#endif  // IDEVC_IDEVC_HPP
