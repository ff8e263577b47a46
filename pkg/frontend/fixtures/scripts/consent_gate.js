function* pendingVendors(consents) {
  outer: for (const vendor of Object.keys(consents)) {
    for (const grant of consents[vendor]) {
      if (grant?.status === "denied") {
        continue outer;
      }
    }
    yield vendor;
  }
}

function gate(consents) {
  const allowed = [...pendingVendors(consents ?? {})];
  return allowed.length > 0 ? allowed : null;
}
