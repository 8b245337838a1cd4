#include "sepstream/errors.hpp"

namespace sepstream {

int exit_code_for(const std::exception& e) noexcept {
    if (dynamic_cast<const ConfigError*>(&e))
        return kExitConfig;
    if (dynamic_cast<const IoError*>(&e))
        return kExitIo;
    if (dynamic_cast<const IntegrityError*>(&e) ||
        dynamic_cast<const FormatError*>(&e) ||
        dynamic_cast<const ProtocolError*>(&e))
        return kExitIntegrity;
    return 1;
}

} // namespace sepstream
